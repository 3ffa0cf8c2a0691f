//! Recurrent goal vector built from the discriminator's leaked feature and
//! the uncovered reader focus.

use crate::encoder::{lstm_cell, LstmParams};
use crate::error::Result;
use crate::graph::{Graph, Var};

#[derive(Clone, Copy, Debug)]
pub struct GoalState {
    /// The goal vector `g_t`.
    pub goal: Var,
    pub cell: Var,
}

impl GoalState {
    pub fn zeros(g: &mut Graph, dim: usize) -> Self {
        Self {
            goal: g.zeros(dim),
            cell: g.zeros(dim),
        }
    }
}

/// One tracker step over `[feature; gap]`.
pub fn track_goal(g: &mut Graph, params: &LstmParams, prev: GoalState, feature: Var, gap: Var) -> Result<GoalState> {
    let input = g.concat(&[feature, gap]);
    let (goal, cell) = lstm_cell(g, params, prev.goal, prev.cell, input)?;
    Ok(GoalState { goal, cell })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn params(g: &mut Graph, w: Vec<f64>, b: Vec<f64>, dim: usize, input: usize) -> LstmParams {
        LstmParams {
            weight: g.constant(w, 4 * dim, input + dim),
            bias: g.vector(b),
        }
    }

    #[test]
    fn zero_parameters_keep_goal_at_zero() {
        let mut g = Graph::new();
        let p = params(&mut g, vec![0.0; 8 * 5], vec![0.0; 8], 2, 3);
        let mut s = GoalState::zeros(&mut g, 2);
        for _ in 0..3 {
            let f = g.vector(vec![1.0, -2.0]);
            let d = g.vector(vec![0.5]);
            s = track_goal(&mut g, &p, s, f, d).unwrap();
            assert_eq!(g.value(s.goal), &[0.0, 0.0]);
        }
    }

    #[test]
    fn zero_inputs_are_driven_by_bias() {
        let mut g = Graph::new();
        let bias = vec![0.1, 0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8];
        let p = params(&mut g, vec![0.3; 8 * 4], bias.clone(), 2, 2);
        let s = GoalState::zeros(&mut g, 2);
        let f = g.zeros(1);
        let d = g.zeros(1);
        let s = track_goal(&mut g, &p, s, f, d).unwrap();
        for j in 0..2 {
            let c = sigmoid(bias[j]) * bias[6 + j].tanh();
            let h = sigmoid(bias[4 + j]) * c.tanh();
            assert!((g.value(s.goal)[j] - h).abs() < 1e-15);
        }
        let p = params(&mut g, vec![0.3; 8 * 4], vec![0.0; 8], 2, 2);
        let s = GoalState::zeros(&mut g, 2);
        let s = track_goal(&mut g, &p, s, f, d).unwrap();
        assert_eq!(g.value(s.goal), &[0.0, 0.0]);
    }

    #[test]
    fn two_steps_against_scalar_recurrence() {
        let dim = 2;
        let input = 3;
        let w: Vec<f64> = (0..4 * dim * (input + dim)).map(|i| ((i * 37 % 11) as f64 - 5.0) / 10.0).collect();
        let b: Vec<f64> = (0..4 * dim).map(|i| (i as f64 - 3.0) / 20.0).collect();
        let inputs = [([0.5, -0.3], [0.8]), ([0.0, 1.2], [-0.4])];

        let mut g = Graph::new();
        let p = params(&mut g, w.clone(), b.clone(), dim, input);
        let mut s = GoalState::zeros(&mut g, dim);
        let mut got = Vec::new();
        for (f, d) in inputs {
            let fv = g.vector(f.to_vec());
            let dv = g.vector(d.to_vec());
            s = track_goal(&mut g, &p, s, fv, dv).unwrap();
            got.push(g.value(s.goal).to_vec());
        }

        let mut h = vec![0.0; dim];
        let mut c = vec![0.0; dim];
        for (step, (f, d)) in inputs.iter().enumerate() {
            let x: Vec<f64> = f.iter().chain(d.iter()).chain(h.iter()).copied().collect();
            let z: Vec<f64> = (0..4 * dim)
                .map(|r| b[r] + (0..x.len()).map(|k| w[r * x.len() + k] * x[k]).sum::<f64>())
                .collect();
            for j in 0..dim {
                let i = sigmoid(z[j]);
                let fg = sigmoid(z[dim + j]);
                let o = sigmoid(z[2 * dim + j]);
                let cand = z[3 * dim + j].tanh();
                c[j] = fg * c[j] + i * cand;
                h[j] = o * c[j].tanh();
            }
            for j in 0..dim {
                assert!((got[step][j] - h[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        let mut g = Graph::new();
        let p = params(&mut g, vec![0.0; 8 * 5], vec![0.0; 8], 2, 3);
        let s = GoalState::zeros(&mut g, 2);
        let f = g.zeros(4);
        let d = g.zeros(1);
        assert!(track_goal(&mut g, &p, s, f, d).is_err());
    }
}
