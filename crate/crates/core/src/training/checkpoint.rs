//! Checkpoints: a directory holding one little-endian `f64` file per
//! parameter block and optimizer accumulator, plus a JSON manifest.

use super::TrainingConfig;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::params::{Adagrad, ParamGroup, ParamStore};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    rows: usize,
    cols: usize,
    group: ParamGroup,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    step: u64,
    config_hash: String,
    config: TrainingConfig,
    learning_rate: f64,
    blocks: Vec<BlockEntry>,
    vocabulary: Vocabulary,
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub config: TrainingConfig,
    pub config_hash: String,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub optimizer: Adagrad,
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight")))
        .collect())
}

impl Checkpoint {
    /// Writes into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let blocks = self.store.blocks();
        for (i, b) in blocks.iter().enumerate() {
            write_f64s(&dir.join(format!("{}.bin", b.name)), &b.data)?;
            write_f64s(&dir.join(format!("{}.acc.bin", b.name)), &self.optimizer.accumulators[i])?;
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            step: self.step,
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            learning_rate: self.optimizer.learning_rate,
            blocks: blocks
                .iter()
                .map(|b| BlockEntry {
                    name: b.name.clone(),
                    rows: b.rows,
                    cols: b.cols,
                    group: b.group,
                })
                .collect(),
            vocabulary: self.vocab.clone(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let raw = fs::read(&manifest_path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
        let m: Manifest = serde_json::from_slice(&raw)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported",
                m.format_version
            )));
        }
        let mut store = ParamStore::new();
        let mut accumulators = Vec::with_capacity(m.blocks.len());
        for b in &m.blocks {
            let n = b.rows * b.cols;
            let data = read_f64s(&dir.join(format!("{}.bin", b.name)), n)?;
            accumulators.push(read_f64s(&dir.join(format!("{}.acc.bin", b.name)), n)?);
            store.insert(&b.name, b.rows, b.cols, b.group, data)?;
        }
        Ok(Self {
            step: m.step,
            config_hash: m.config_hash,
            config: m.config,
            vocab: m.vocabulary,
            store,
            optimizer: Adagrad {
                learning_rate: m.learning_rate,
                accumulators,
            },
        })
    }
}
