use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rasg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rasg"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("RASG_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rasg(dir, args);
    assert!(
        out.status.success(),
        "rasg {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = rasg(dir, args);
    assert!(!out.status.success(), "rasg {args:?} should have failed");
    String::from_utf8(out.stderr).unwrap()
}

const TINY: &str = r#"{
  "model": {"embedding_dim": 8, "hidden_dim": 4, "filters": 4, "max_decode_len": 16},
  "batch_size": 2,
  "max_steps": 4,
  "beam_size": 2,
  "eval_examples": 2
}"#;

/// A temp dir holding a 30-example corpus in `data/` and the tiny config.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["make-corpus", "--seed", "3", "--n", "30", "--out", "data"]);
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--corpus", "data", "--config", "tiny.json", "--name", name];
    args.extend_from_slice(extra);
    ok(dir, &args);
    dir.join("runs").join(name)
}

#[test]
fn make_corpus_writes_splits_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["make-corpus", "--seed", "42", "--n", "40", "--out", "data"]);
    let files = ["train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(d.join("data").join(f)).unwrap()).collect();
    let lines = |b: &[u8]| b.iter().filter(|&&c| c == b'\n').count();
    assert_eq!((lines(&first[0]), lines(&first[1]), lines(&first[2])), (32, 4, 4));

    let err = fails(d, &["make-corpus", "--seed", "42", "--n", "40", "--out", "data"]);
    assert!(err.contains("--force"), "{err}");
    ok(d, &["make-corpus", "--seed", "42", "--n", "40", "--out", "data", "--force"]);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(d.join("data").join(f)).unwrap(), bytes, "{f} changed");
    }
    // Nothing is left behind by the staging directory.
    assert_eq!(fs::read_dir(d).unwrap().count(), 1);
}

#[test]
fn noise_free_corpus_is_all_helpful() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["make-corpus", "--n", "20", "--noise-fraction", "0.0", "--out", "clean"]);
    let stop = rasg_core::corpus::default_stopwords();
    for split in ["train", "dev", "test"] {
        let examples = rasg_core::corpus::read_jsonl(&dir.path().join("clean").join(format!("{split}.jsonl"))).unwrap();
        for ex in examples {
            let labels = rasg_core::corpus::label_comments(&ex.summary, &ex.comments, &stop);
            assert!(labels.iter().all(|&l| l == 1));
        }
    }
}

#[test]
fn train_writes_the_run_layout() {
    let dir = workspace();
    let run = train(dir.path(), "base", &[]);
    for f in ["manifest.json", "config.json", "metrics.csv", "reports/final_dev.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    assert!(run.join("checkpoints/step-0000004/manifest.json").is_file());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 1);
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    assert!(metrics.starts_with("step,L_g,L_d,L_c^g,L_c^d,"));
}

#[test]
fn ablation_and_baseline_flags_pick_the_variant() {
    let dir = workspace();
    let variant = |run: &Path| {
        let cfg: serde_json::Value = serde_json::from_slice(&fs::read(run.join("config.json")).unwrap()).unwrap();
        cfg["model"]["variant"].as_str().unwrap().to_string()
    };
    let gtd = train(dir.path(), "gtd", &["--ablation", "gtd", "--steps", "1"]);
    assert_eq!(variant(&gtd), "without_gtd");
    // No discriminator: the L_c^d column stays empty.
    let rows = fs::read_to_string(gtd.join("metrics.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().split(',').nth(4).unwrap().is_empty());
    let s2s = train(dir.path(), "s2s", &["--baseline", "s2s", "--steps", "1"]);
    assert_eq!(variant(&s2s), "s2s");

    let err = fails(
        dir.path(),
        &["train", "--corpus", "data", "--name", "x", "--baseline", "s2s", "--ablation", "gt"],
    );
    assert!(err.contains("cannot be used with"), "{err}");
}

#[test]
fn missing_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(dir.path(), &["train", "--corpus", "nowhere", "--name", "x"]);
    assert!(err.contains("nowhere"), "{err}");
    assert!(!dir.path().join("runs/x").exists());
}

#[test]
fn training_is_deterministic_and_resumable() {
    let dir = workspace();
    let d = dir.path();
    let a = train(d, "a", &["--steps", "6", "--checkpoint-every", "3"]);
    let b = train(d, "b", &["--steps", "6", "--checkpoint-every", "3"]);
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());

    let half = a.join("checkpoints/step-0000003");
    let c = train(d, "c", &["--steps", "6", "--checkpoint-every", "3", "--resume", half.to_str().unwrap()]);
    let blocks = |run: &Path| {
        let ckpt = run.join("checkpoints/step-0000006");
        let mut files: Vec<_> = fs::read_dir(&ckpt)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        files.into_iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(blocks(&a), blocks(&c));

    // Resuming under a different config needs explicit consent.
    let err = fails(
        d,
        &["train", "--corpus", "data", "--config", "tiny.json", "--name", "e", "--seed", "9", "--resume", half.to_str().unwrap()],
    );
    assert!(err.contains("--allow-mismatch"), "{err}");
}

#[test]
fn eval_compares_systems_and_dumps_attention() {
    let dir = workspace();
    let d = dir.path();
    train(d, "r1", &["--steps", "2"]);
    train(d, "r2", &["--steps", "2", "--baseline", "s2sr"]);

    let lead = ok(d, &["eval", "--corpus", "data", "--name", "lead", "--lead1"]);
    assert!(lead.contains("| LEAD1 |"), "{lead}");

    let table = ok(
        d,
        &["eval", "--corpus", "data", "--name", "cmp", "--checkpoint", "runs/r1", "--checkpoint", "runs/r2", "--beam", "2", "--dump-attention"],
    );
    assert!(table.contains("RASG (r1)") && table.contains("S2SR (r2)"), "{table}");
    let reports = d.join("runs/cmp/reports");
    assert!(reports.join("comparison.md").is_file());
    let line = fs::read_to_string(reports.join("RASG__r1_.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert!(first["attention"].is_array() && first["reader_attention"].is_array());
}

#[test]
fn eval_refuses_mismatched_config() {
    let dir = workspace();
    let d = dir.path();
    let run = train(d, "r", &["--steps", "1"]);
    let cfg = fs::read_to_string(run.join("config.json")).unwrap();
    fs::write(run.join("config.json"), cfg.replace("\"seed\": 1", "\"seed\": 2")).unwrap();
    let args = ["eval", "--corpus", "data", "--name", "e", "--checkpoint", "runs/r", "--examples", "2"];
    let err = fails(d, &args);
    assert!(err.contains("mismatch"), "{err}");
    let mut forced = args.to_vec();
    forced.push("--allow-mismatch");
    ok(d, &forced);
}

#[test]
fn diagnose_reports_every_checkpoint() {
    let dir = workspace();
    let d = dir.path();
    train(d, "r", &["--steps", "4", "--checkpoint-every", "2"]);
    ok(d, &["diagnose", "--run", "runs/r", "--corpus", "data", "--examples", "3", "--dump-reader-attention"]);
    let csv = fs::read_to_string(d.join("runs/r/reports/diagnostics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,denoise_recall,cosine_distance");
    assert_eq!(lines.len(), 3);
    let eps = fs::read_to_string(d.join("runs/r/reports/reader_attention.jsonl")).unwrap();
    assert_eq!(eps.lines().count(), 3);
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["grad-check", "--per-block", "3"]);
    assert!(out.contains("blocks within"), "{out}");
}
