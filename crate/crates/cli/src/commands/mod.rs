pub mod diagnose;
pub mod eval;
pub mod grad_check;
pub mod make_corpus;
pub mod train;

use anyhow::{bail, Context, Result};
use rasg_core::Example;
use std::path::Path;

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

/// Reads `<dir>/<split>.jsonl`.
pub fn read_split(dir: &Path, split: &str) -> Result<Vec<Example>> {
    if !SPLITS.contains(&split) {
        bail!("unknown split {split:?}; expected one of {SPLITS:?}");
    }
    if !dir.is_dir() {
        bail!("corpus directory {} does not exist", dir.display());
    }
    let path = dir.join(format!("{split}.jsonl"));
    rasg_core::corpus::read_jsonl(&path).with_context(|| format!("reading {}", path.display()))
}

/// Worker count for evaluation, from `RASG_THREADS`.
pub fn threads() -> usize {
    rasg_core::evaluation::threads_from_env()
}
