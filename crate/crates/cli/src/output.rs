use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub full_config: serde_json::Value,
    pub master_seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

/// Files written by one invocation, for the manifest.
pub struct Outputs {
    started: DateTime<Utc>,
    files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

impl Outputs {
    pub fn new() -> Self {
        Outputs { started: Utc::now(), files: Vec::new() }
    }

    pub fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut f = create(path)?;
        f.write_all(to_json_string(value)?.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path.to_path_buf());
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_writer(create(path)?);
        for row in rows {
            w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path.to_path_buf());
        Ok(())
    }

    /// Writes the manifest listing every file written so far.
    pub fn manifest(self, path: &Path, command: &str, full_config: serde_json::Value, seed: u64) -> Result<()> {
        let outputs = self
            .files
            .iter()
            .map(|p| {
                Ok(OutputFile {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            full_config,
            master_seed: seed,
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            outputs,
        };
        let mut f = create(path)?;
        f.write_all(to_json_string(&m)?.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// `<path>.manifest.json` next to a primary output.
pub fn default_manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_stem().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
