use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anticipation::workflow::write_text;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, ExitCode};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    /// Run-relative path → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    /// The resolved configuration that produced the artifacts.
    pub config: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

impl Manifest {
    pub fn load(root: &Path) -> CliResult<Option<Manifest>> {
        let path = root.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Tracks the artifacts one command writes and refuses to replace existing
/// files unless overwriting was requested.
pub struct Recorder {
    root: PathBuf,
    overwrite: bool,
    artifacts: BTreeMap<String, String>,
}

impl Recorder {
    pub fn new(root: &Path, overwrite: bool) -> Self {
        Self {
            root: root.to_path_buf(),
            overwrite,
            artifacts: BTreeMap::new(),
        }
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn guard(&self, path: &Path) -> CliResult<()> {
        if path.exists() && !self.overwrite {
            return Err(CliError::new(
                ExitCode::Config,
                format!(
                    "{} already exists; run directories are append-only (use --overwrite or a new --out)",
                    path.display()
                ),
            ));
        }
        Ok(())
    }

    pub fn record(&mut self, path: &Path) -> CliResult<()> {
        let sum = sha256_file(path)?;
        self.artifacts.insert(self.rel(path), sum);
        Ok(())
    }

    /// Checks the guard, writes `text` and records the file.
    pub fn write(&mut self, path: &Path, text: &str) -> CliResult<()> {
        self.guard(path)?;
        write_text(path, text)?;
        self.record(path)
    }

    pub fn finish(self, command: &str, cfg: &RunConfig) -> CliResult<()> {
        let mut m = Manifest::load(&self.root)?.unwrap_or_default();
        let hash = cfg.hash();
        if !m.config_hash.is_empty() && m.config_hash != hash {
            if !self.overwrite {
                return Err(CliError::config(format!(
                    "{} was produced with a different config (hash {}); use --overwrite or a new --out",
                    self.root.display(),
                    m.config_hash
                )));
            }
            m.commands.clear();
        }
        m.config_hash = hash;
        m.seed = cfg.seed;
        m.config = cfg.to_toml();
        m.commands.insert(command.to_string(), CommandRecord { artifacts: self.artifacts });
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_text(&self.root.join(MANIFEST), &text)?;
        Ok(())
    }

    /// Fails early if the run directory belongs to another config.
    pub fn check_config(&self, cfg: &RunConfig) -> CliResult<()> {
        if let Some(m) = Manifest::load(&self.root)? {
            if m.config_hash != cfg.hash() && !self.overwrite {
                return Err(CliError::config(format!(
                    "{} was produced with a different config; use --overwrite or a new --out",
                    self.root.display()
                )));
            }
        }
        Ok(())
    }
}
