use super::{read_split, threads};
use crate::run_dir::{checkpoints, read_json, write_atomic, RunManifest, Staging};
use anyhow::{bail, Context, Result};
use rasg_core::evaluation::{evaluate_lead1, evaluate_model, markdown_table, EvalOptions, GeneratedRecord, RougeReport};
use rasg_core::training::{Checkpoint, TrainingConfig};
use rasg_core::Model;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Checkpoint directory, or a run directory (its latest checkpoint is
    /// used). Repeat to compare several systems in one table.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Include the first-sentence baseline.
    #[arg(long)]
    lead1: bool,
    /// Output goes to `<runs-dir>/<name>`.
    #[arg(long)]
    name: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long, default_value_t = 40)]
    max_len: usize,
    /// Evaluate only the first N examples of the split.
    #[arg(long)]
    examples: Option<usize>,
    /// Write per-example reader attention and decoder attention traces.
    #[arg(long)]
    dump_attention: bool,
    /// Report ROUGE recall instead of F1 in the table.
    #[arg(long)]
    recall_only: bool,
    /// Evaluate checkpoints whose config hash does not match.
    #[arg(long)]
    allow_mismatch: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Serialize)]
struct EvalConfig<'a> {
    corpus: &'a Path,
    split: &'a str,
    checkpoints: &'a [PathBuf],
    lead1: bool,
    options: EvalOptions,
    examples: Option<usize>,
    recall_only: bool,
}

/// Resolves a run directory to its newest checkpoint.
fn checkpoint_path(p: &Path) -> Result<PathBuf> {
    if p.join("checkpoints").is_dir() {
        match checkpoints(p)?.pop() {
            Some((_, dir)) => Ok(dir),
            None => bail!("run {} has no checkpoints", p.display()),
        }
    } else {
        Ok(p.to_path_buf())
    }
}

/// The checkpoint must agree with its own config and, when it sits inside
/// a run directory, with that run's `config.json`.
fn check_hash(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let own = ckpt.config.hash();
    if own != ckpt.config_hash {
        bail!("{}: stored config hashes to {own}, manifest says {}", dir.display(), ckpt.config_hash);
    }
    let run_config = dir.parent().and_then(Path::parent).map(|r| r.join("config.json"));
    if let Some(path) = run_config.filter(|p| p.is_file()) {
        let cfg: TrainingConfig = read_json(&path)?;
        if cfg.hash() != ckpt.config_hash {
            bail!(
                "{}: checkpoint config hash {} does not match {} ({})",
                dir.display(),
                ckpt.config_hash,
                path.display(),
                cfg.hash()
            );
        }
    }
    Ok(())
}

fn system_name(dir: &Path, model: &Model) -> String {
    let run = dir
        .parent()
        .and_then(Path::parent)
        .and_then(Path::file_name)
        .or_else(|| dir.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{} ({run})", model.variant().label())
}

fn write_records(path: &Path, records: &[GeneratedRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

fn file_stem(system: &str) -> String {
    system
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    if args.checkpoints.is_empty() && !args.lead1 {
        bail!("nothing to evaluate: give --checkpoint and/or --lead1");
    }
    if args.beam == 0 {
        bail!("--beam must be at least 1");
    }
    let mut examples = read_split(&args.corpus, &args.split)?;
    if let Some(n) = args.examples {
        examples.truncate(n);
    }
    let options = EvalOptions {
        beam: args.beam,
        max_len: args.max_len,
        threads: threads(),
        dump_attention: args.dump_attention,
    };

    // Load and verify everything before any output appears.
    let mut models = Vec::new();
    for p in &args.checkpoints {
        let dir = checkpoint_path(p)?;
        let ckpt = Checkpoint::load(&dir).with_context(|| format!("loading {}", dir.display()))?;
        if let Err(e) = check_hash(&dir, &ckpt) {
            if !args.allow_mismatch {
                return Err(e.context("config hash mismatch (pass --allow-mismatch to evaluate anyway)"));
            }
            log::warn!("{e:#}");
        }
        let model = Model::from_store(ckpt.config.model.clone(), ckpt.vocab, ckpt.store)?;
        models.push((system_name(&dir, &model), model));
    }

    let eval_config = EvalConfig {
        corpus: &args.corpus,
        split: &args.split,
        checkpoints: &args.checkpoints,
        lead1: args.lead1,
        options,
        examples: args.examples,
        recall_only: args.recall_only,
    };
    let config_json = serde_json::to_vec(&eval_config)?;
    log::info!("effective config: {}", String::from_utf8_lossy(&config_json));
    let target = args.runs_dir.join(&args.name);
    let staging = Staging::new(&target, args.force)?;
    let mut manifest = RunManifest::new("eval", argv, &target);
    manifest.config_hash = Some(rasg_core::corpus::sha256_hex(&config_json));
    staging.write_json("manifest.json", &manifest)?;
    staging.write_json("config.json", &eval_config)?;
    let reports_dir = staging.path().join("reports");
    std::fs::create_dir_all(&reports_dir)?;

    let mut reports: Vec<RougeReport> = Vec::new();
    let mut emit = |mut report: RougeReport, records: Vec<GeneratedRecord>| -> Result<()> {
        report.recall_only = args.recall_only;
        let stem = file_stem(&report.system);
        write_records(&reports_dir.join(format!("{stem}.jsonl")), &records)?;
        let [r1, r2, rl] = report.points();
        log::info!("{}: ROUGE-1 {r1:.2} ROUGE-2 {r2:.2} ROUGE-L {rl:.2}", report.system);
        reports.push(report);
        Ok(())
    };
    if args.lead1 {
        let (report, records) = evaluate_lead1(&examples)?;
        emit(report, records)?;
    }
    for (name, model) in &models {
        let (mut report, records) = evaluate_model(model, &examples, &options)?;
        report.system = name.clone();
        emit(report, records)?;
    }
    let table = markdown_table(&reports);
    staging.write_json("reports/comparison.json", &reports)?;
    std::fs::write(reports_dir.join("comparison.md"), &table)?;
    let out = staging.commit()?;
    print!("{table}");
    println!("reports written to {}", out.join("reports").display());
    Ok(())
}
