//! Output directories that appear atomically, and the manifest every run
//! writes before doing any work.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub source_revision: String,
    pub output_dir: PathBuf,
    pub started_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], output_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_path: None,
            config_hash: None,
            seed: None,
            source_revision: source_revision(),
            output_dir: output_dir.to_path_buf(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// `git describe` of the working tree when available, else the crate
/// version.
fn source_revision() -> String {
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output();
    match git {
        Ok(out) if out.status.success() => String::from_utf8_lossy(&out.stdout).trim().to_string(),
        _ => format!("rasg {}", env!("CARGO_PKG_VERSION")),
    }
}

/// A directory filled under a temporary name and renamed into place by
/// [`Staging::commit`]. Dropping it without committing leaves the partial
/// output next to the target for inspection.
pub struct Staging {
    target: PathBuf,
    temp: PathBuf,
    force: bool,
}

impl Staging {
    pub fn new(target: &Path, force: bool) -> Result<Self> {
        if target.exists() && !force {
            bail!("{} already exists (pass --force to replace it)", target.display());
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let name = target
            .file_name()
            .with_context(|| format!("{} has no final component", target.display()))?
            .to_string_lossy();
        let temp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if temp.exists() {
            fs::remove_dir_all(&temp)?;
        }
        fs::create_dir_all(&temp).with_context(|| format!("creating {}", temp.display()))?;
        Ok(Self {
            target: target.to_path_buf(),
            temp,
            force,
        })
    }

    pub fn path(&self) -> &Path {
        &self.temp
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.temp.join(name);
        fs::write(&path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.target.exists() {
            if !self.force {
                bail!("{} appeared while the command ran", self.target.display());
            }
            fs::remove_dir_all(&self.target).with_context(|| format!("removing {}", self.target.display()))?;
        }
        fs::rename(&self.temp, &self.target)
            .with_context(|| format!("renaming {} to {}", self.temp.display(), self.target.display()))?;
        Ok(self.target)
    }
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?
        .to_string_lossy();
    let temp = path.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    fs::write(&temp, bytes).with_context(|| format!("writing {}", temp.display()))?;
    fs::rename(&temp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&raw).with_context(|| format!("parsing {}", path.display()))
}

/// Checkpoint directories under `<run>/checkpoints`, oldest first.
pub fn checkpoints(run: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let dir = run.join("checkpoints");
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("step-").and_then(|s| s.parse().ok()) {
            out.push((step, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

pub fn checkpoint_dir_name(step: u64) -> String {
    format!("step-{step:07}")
}
