use super::train::{variant_for, Ablation, Baseline};
use anyhow::{bail, Result};
use rasg_core::training::{grad_check, tiny_instance, BlockError, Objective};
use rasg_core::Variant;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum, conflicts_with = "baseline")]
    ablation: Option<Ablation>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Coordinates checked per parameter block.
    #[arg(long, default_value_t = 8)]
    per_block: usize,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    /// Write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Entry {
    objective: Objective,
    #[serde(flatten)]
    block: BlockError,
}

pub fn run(args: Args) -> Result<()> {
    let variant = variant_for(args.ablation, args.baseline).unwrap_or(Variant::Rasg);
    let (mut model, ex) = tiny_instance(variant, args.seed)?;
    let mut entries = Vec::new();
    for objective in Objective::ALL {
        for block in grad_check(&mut model, &ex, objective, args.eps, args.per_block, args.seed)? {
            let ok = block.max_rel_error < args.tolerance;
            println!(
                "{:<14} {:<28} {:>3} coords  max rel err {:.3e}  {}",
                format!("{objective:?}"),
                block.name,
                block.checked,
                block.max_rel_error,
                if ok { "ok" } else { "FAIL" }
            );
            entries.push(Entry { objective, block });
        }
    }
    if let Some(path) = &args.out {
        crate::run_dir::write_atomic(path, &serde_json::to_vec_pretty(&entries)?)?;
    }
    let failed = entries.iter().filter(|e| e.block.max_rel_error >= args.tolerance).count();
    if failed > 0 {
        bail!("{failed} block(s) above tolerance {}", args.tolerance);
    }
    println!("all {} blocks within {}", entries.len(), args.tolerance);
    Ok(())
}
