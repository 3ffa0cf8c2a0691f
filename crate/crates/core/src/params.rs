//! Named parameter blocks, their gradients, and the Adagrad optimizer.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Which side of the adversarial split a block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Generator,
    Discriminator,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: ParamGroup,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        group: ParamGroup,
        data: Vec<f64>,
    ) -> Result<ParamId> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "block {name}: {} values for shape {rows}x{cols}",
                data.len()
            )));
        }
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter block {name}")));
        }
        let id = ParamId(self.blocks.len());
        self.blocks.push(ParamBlock {
            name: name.to_string(),
            rows,
            cols,
            group,
            data,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Inserts a block initialised uniformly in `[-scale, scale]`.
    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        group: ParamGroup,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let data = (0..rows * cols)
            .map(|_| if scale == 0.0 { 0.0 } else { rng.gen_range(-scale..=scale) })
            .collect();
        self.insert(name, rows, cols, group, data)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn block(&self, id: ParamId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: ParamId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.blocks.len()).map(ParamId)
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total number of scalars.
    pub fn num_values(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    /// Sets every value to zero.
    pub fn zero_all(&mut self) {
        for b in &mut self.blocks {
            b.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Gradients keyed like a [`ParamStore`]; blocks that received no gradient
/// stay unallocated.
#[derive(Clone, Debug, Default)]
pub struct Grads {
    blocks: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            blocks: vec![None; store.len()],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, g: &[f64]) {
        self.add_scaled(id, g, 1.0);
    }

    fn add_scaled(&mut self, id: ParamId, g: &[f64], scale: f64) {
        match &mut self.blocks[id.0] {
            Some(b) => b.iter_mut().zip(g).for_each(|(a, x)| *a += scale * x),
            slot @ None => *slot = Some(g.iter().map(|x| scale * x).collect()),
        }
    }

    /// `self += scale * other`.
    pub fn add_assign_scaled(&mut self, other: &Grads, scale: f64) {
        for (i, b) in other.blocks.iter().enumerate() {
            if let Some(b) = b {
                self.add_scaled(ParamId(i), b, scale);
            }
        }
    }

    pub fn block(&self, id: ParamId) -> Option<&[f64]> {
        self.blocks[id.0].as_deref()
    }

    pub fn block_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>> {
        self.blocks[id.0].as_mut()
    }

    /// L2 norm over the blocks of `group`.
    pub fn norm(&self, store: &ParamStore, group: ParamGroup) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| store.blocks[*i].group == group)
            .filter_map(|(_, b)| b.as_ref())
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .flatten()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Adagrad with per-coordinate accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct Adagrad {
    pub learning_rate: f64,
    pub accumulators: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(store: &ParamStore, learning_rate: f64, initial_accumulator: f64) -> Self {
        Self {
            learning_rate,
            accumulators: store
                .blocks()
                .iter()
                .map(|b| vec![initial_accumulator; b.data.len()])
                .collect(),
        }
    }

    /// Updates only the blocks in `group`. Gradients are rescaled so their
    /// joint norm is at most `clip_norm` when it is positive.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, group: ParamGroup, clip_norm: f64) {
        let norm = grads.norm(store, group);
        let scale = if clip_norm > 0.0 && norm > clip_norm {
            clip_norm / norm
        } else {
            1.0
        };
        for id in store.ids().collect::<Vec<_>>() {
            if store.block(id).group != group {
                continue;
            }
            let Some(g) = grads.block(id) else { continue };
            let acc = &mut self.accumulators[id.0];
            let lr = self.learning_rate;
            for ((w, a), gv) in store.block_mut(id).data.iter_mut().zip(acc.iter_mut()).zip(g) {
                let gv = gv * scale;
                *a += gv * gv;
                *w -= lr * gv / a.sqrt();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adagrad_only_touches_its_group() {
        let mut s = ParamStore::new();
        let a = s.insert("a", 1, 2, ParamGroup::Generator, vec![1.0, 2.0]).unwrap();
        let b = s.insert("b", 1, 1, ParamGroup::Discriminator, vec![3.0]).unwrap();
        let mut grads = Grads::zeros_like(&s);
        grads.accumulate(a, &[0.5, -0.5]);
        grads.accumulate(b, &[1.0]);
        let mut opt = Adagrad::new(&s, 0.1, 0.1);
        opt.step(&mut s, &grads, ParamGroup::Generator, 0.0);
        assert_eq!(s.block(b).data, vec![3.0]);
        // acc = 0.1 + 0.25 = 0.35
        let expected = 1.0 - 0.1 * 0.5 / 0.35f64.sqrt();
        assert!((s.block(a).data[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut s = ParamStore::new();
        let a = s.insert("a", 1, 1, ParamGroup::Generator, vec![1.0]).unwrap();
        let mut grads = Grads::zeros_like(&s);
        grads.accumulate(a, &[10.0]);
        let mut opt = Adagrad::new(&s, 0.0, 0.1);
        opt.step(&mut s, &grads, ParamGroup::Generator, 2.0);
        assert_eq!(s.block(a).data, vec![1.0]);
    }

    #[test]
    fn clipping_bounds_the_update_norm() {
        let mut s = ParamStore::new();
        let a = s.insert("a", 1, 1, ParamGroup::Generator, vec![0.0]).unwrap();
        let mut grads = Grads::zeros_like(&s);
        grads.accumulate(a, &[100.0]);
        let mut opt = Adagrad::new(&s, 1.0, 0.0);
        opt.step(&mut s, &grads, ParamGroup::Generator, 2.0);
        // clipped to 2, acc = 4, update = 2 / 2
        assert!((s.block(a).data[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_and_misshaped_blocks_are_rejected() {
        let mut s = ParamStore::new();
        s.insert("a", 1, 1, ParamGroup::Generator, vec![0.0]).unwrap();
        assert!(s.insert("a", 1, 1, ParamGroup::Generator, vec![0.0]).is_err());
        assert!(s.insert("b", 2, 2, ParamGroup::Generator, vec![0.0]).is_err());
    }
}
