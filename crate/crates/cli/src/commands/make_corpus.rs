use crate::run_dir::{read_json, RunManifest, Staging};
use anyhow::{Context, Result};
use rasg_core::corpus::{make_synthetic_corpus, sha256_hex, split_sizes, to_jsonl, CorpusManifest, SplitInfo, SyntheticConfig};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Total number of examples, split 80/10/10.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// JSON generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    noise_fraction: Option<f64>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

pub fn run(args: Args, argv: &[String]) -> Result<()> {
    let mut config: SyntheticConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(f) = args.noise_fraction {
        config.noise_fraction = f;
    }
    config.validate()?;
    let config_json = serde_json::to_vec(&config)?;
    log::info!("corpus config: {}", String::from_utf8_lossy(&config_json));

    let staging = Staging::new(&args.out, args.force)?;
    let mut manifest = RunManifest::new("make-corpus", argv, &args.out);
    manifest.config_path = args.config.clone();
    manifest.config_hash = Some(sha256_hex(&config_json));
    manifest.seed = Some(args.seed);
    staging.write_json("run.json", &manifest)?;

    let examples = make_synthetic_corpus(args.seed, args.n, &config)?;
    let (train, dev, _) = split_sizes(examples.len());
    let parts = [
        ("train", &examples[..train]),
        ("dev", &examples[train..train + dev]),
        ("test", &examples[train + dev..]),
    ];
    let mut splits = BTreeMap::new();
    for (name, part) in parts {
        let bytes = to_jsonl(part)?;
        let file = format!("{name}.jsonl");
        let path = staging.path().join(&file);
        std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        splits.insert(
            name.to_string(),
            SplitInfo {
                file,
                examples: part.len(),
                sha256: sha256_hex(&bytes),
            },
        );
        log::info!("{name}: {} examples", part.len());
    }
    staging.write_json(
        "manifest.json",
        &CorpusManifest {
            seed: args.seed,
            config,
            config_hash: sha256_hex(&config_json),
            splits,
        },
    )?;
    let out = staging.commit()?;
    println!("wrote corpus to {}", out.display());
    Ok(())
}
