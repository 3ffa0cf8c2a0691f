use super::{read_split, threads};
use crate::run_dir::{checkpoints, write_atomic, RunManifest};
use anyhow::{bail, Context, Result};
use rasg_core::corpus::encode_example;
use rasg_core::evaluation::diagnostics;
use rasg_core::training::Checkpoint;
use rasg_core::Model;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "dev")]
    split: String,
    /// Use only the first N examples of the split.
    #[arg(long)]
    examples: Option<usize>,
    /// Also write the reader attention of the latest checkpoint, one JSON
    /// array per example.
    #[arg(long)]
    dump_reader_attention: bool,
}

#[derive(Debug, Serialize)]
struct Row {
    step: u64,
    denoise_recall: Option<f64>,
    cosine_distance: Option<f64>,
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let mut examples = read_split(&args.corpus, &args.split)?;
    if let Some(n) = args.examples {
        examples.truncate(n);
    }
    let ckpts = checkpoints(&args.run)?;
    if ckpts.is_empty() {
        bail!("run {} has no checkpoints", args.run.display());
    }
    let reports = args.run.join("reports");
    std::fs::create_dir_all(&reports)?;
    let manifest = RunManifest::new("diagnose", argv, &reports);
    write_atomic(&reports.join("diagnose_manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;

    let threads = threads();
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut latest = None;
    for (step, dir) in ckpts {
        let ckpt = Checkpoint::load(&dir).with_context(|| format!("loading {}", dir.display()))?;
        let model = Model::from_store(ckpt.config.model.clone(), ckpt.vocab, ckpt.store)?;
        let d = diagnostics(&model, &examples, threads)?;
        log::info!("step {step}: recall {:?} focus distance {:?}", d.denoise_recall, d.cosine_distance);
        csv.serialize(Row {
            step,
            denoise_recall: d.denoise_recall,
            cosine_distance: d.cosine_distance,
        })?;
        latest = Some(model);
    }
    let bytes = csv.into_inner().context("flushing diagnostics")?;
    write_atomic(&reports.join("diagnostics.csv"), &bytes)?;

    if args.dump_reader_attention {
        let model = latest.expect("at least one checkpoint");
        let mut buf = Vec::new();
        for ex in &examples {
            let g = model.generate(&encode_example(ex, &model.vocab), 1, model.config.max_decode_len)?;
            serde_json::to_writer(&mut buf, &g.reader_attention)?;
            buf.push(b'\n');
        }
        write_atomic(&reports.join("reader_attention.jsonl"), &buf)?;
    }
    println!("diagnostics written to {}", reports.display());
    Ok(())
}
