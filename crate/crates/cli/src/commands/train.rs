use super::{read_split, threads};
use crate::run_dir::{checkpoint_dir_name, read_json, RunManifest, Staging};
use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rasg_core::training::{Checkpoint, MetricsWriter, Trainer, TrainingConfig};
use rasg_core::Variant;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    None,
    Dm,
    G,
    Gt,
    Gtd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    S2s,
    S2sr,
}

pub fn variant_for(ablation: Option<Ablation>, baseline: Option<Baseline>) -> Option<Variant> {
    match (ablation, baseline) {
        (_, Some(Baseline::S2s)) => Some(Variant::S2s),
        (_, Some(Baseline::S2sr)) => Some(Variant::S2sr),
        (Some(Ablation::None), None) => Some(Variant::Rasg),
        (Some(Ablation::Dm), None) => Some(Variant::WithoutDm),
        (Some(Ablation::G), None) => Some(Variant::WithoutG),
        (Some(Ablation::Gt), None) => Some(Variant::WithoutGt),
        (Some(Ablation::Gtd), None) => Some(Variant::WithoutGtd),
        (None, None) => None,
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory written by `make-corpus`.
    #[arg(long)]
    corpus: PathBuf,
    /// Run name; output goes to `<runs-dir>/<name>`.
    #[arg(long)]
    name: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// JSON training config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Remove one RASG module.
    #[arg(long, value_enum, conflicts_with = "baseline")]
    ablation: Option<Ablation>,
    /// Train a comparison system instead of RASG.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of generator updates.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    eval_examples: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Resume even when the effective config differs from the checkpoint's.
    #[arg(long)]
    allow_mismatch: bool,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
}

impl Args {
    fn apply_flags(&self, cfg: &mut TrainingConfig) {
        if let Some(v) = variant_for(self.ablation, self.baseline) {
            cfg.model.variant = v;
        }
        let overrides = [
            (self.seed, &mut cfg.seed),
            (self.steps, &mut cfg.max_steps),
            (self.eval_every, &mut cfg.eval_every),
            (self.checkpoint_every, &mut cfg.checkpoint_every),
        ];
        for (flag, field) in overrides {
            if let Some(v) = flag {
                *field = v;
            }
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(n) = self.eval_examples {
            cfg.eval_examples = n;
        }
    }
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let train = read_split(&args.corpus, "train")?;
    let dev = read_split(&args.corpus, "dev")?;

    let resume = match &args.resume {
        Some(dir) => Some(Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?),
        None => None,
    };
    let mut config = match (&args.config, &resume) {
        (Some(p), _) => read_json(p)?,
        (None, Some(ckpt)) => ckpt.config.clone(),
        (None, None) => TrainingConfig::default(),
    };
    args.apply_flags(&mut config);
    config.validate()?;
    log::info!("effective config: {}", serde_json::to_string(&config)?);

    let target = args.runs_dir.join(&args.name);
    let staging = Staging::new(&target, args.force)?;
    let mut manifest = RunManifest::new("train", argv, &target);
    manifest.config_path = args.config.clone();
    manifest.config_hash = Some(config.hash());
    manifest.seed = Some(config.seed);
    staging.write_json("manifest.json", &manifest)?;
    staging.write_json("config.json", &config)?;

    let mut trainer = match resume {
        Some(mut ckpt) => {
            if ckpt.config_hash != config.hash() {
                if !args.allow_mismatch {
                    bail!(
                        "config hash {} differs from the checkpoint's {} (pass --allow-mismatch to resume anyway)",
                        config.hash(),
                        ckpt.config_hash
                    );
                }
                log::warn!("resuming with a config that differs from the checkpoint's");
                ckpt.config = config.clone();
                ckpt.config_hash = config.hash();
            }
            log::info!("resuming at step {}", ckpt.step);
            Trainer::from_checkpoint(ckpt, &train)?
        }
        None => Trainer::new(config.clone(), &train)?,
    };

    let ckpt_root = staging.path().join("checkpoints");
    let reports = staging.path().join("reports");
    std::fs::create_dir_all(&ckpt_root)?;
    std::fs::create_dir_all(&reports)?;
    let mut metrics = MetricsWriter::open(&staging.path().join("metrics.csv"))?;
    let every = config.checkpoint_every;
    let max_steps = config.max_steps;
    let threads = threads();
    let mut last = None;
    trainer.run(&dev, threads, |t, row| {
        metrics.write(row)?;
        last = Some(row.clone());
        if row.rouge_l.is_some() || row.denoise_recall.is_some() || row.cosine_distance.is_some() {
            log::info!(
                "step {}: L_g {:.4} dev ROUGE-L {:?} recall {:?} focus distance {:?}",
                row.step,
                row.nll,
                row.rouge_l,
                row.denoise_recall,
                row.cosine_distance
            );
        }
        if (every > 0 && t.step % every == 0) || t.step == max_steps {
            t.checkpoint().save(&ckpt_root.join(checkpoint_dir_name(t.step)))?;
        }
        Ok(())
    })?;
    if trainer.step == max_steps && !ckpt_root.join(checkpoint_dir_name(max_steps)).exists() {
        trainer.checkpoint().save(&ckpt_root.join(checkpoint_dir_name(max_steps)))?;
    }
    if let Some(row) = last {
        staging.write_json("reports/final_dev.json", &row)?;
    }
    let out = staging.commit()?;
    println!("trained {} steps; run written to {}", trainer.step, out.display());
    Ok(())
}
