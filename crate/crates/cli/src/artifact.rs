//! Atomic output files and the provenance sidecars that tie every
//! artifact to the config that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// `<file>.provenance.json`.
pub const SIDECAR_SUFFIX: &str = ".provenance.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub command: String,
    /// Invocation arguments that select within the config.
    pub args: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(SIDECAR_SUFFIX);
    PathBuf::from(name)
}

pub fn read_provenance(path: &Path) -> CliResult<Provenance> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)
        .map_err(|e| CliError::data(format!("missing provenance for {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Refuses an input produced under a different config.
pub fn check_input(path: &Path, config_hash: &str) -> CliResult<Provenance> {
    let p = read_provenance(path)?;
    if p.config_hash != config_hash {
        return Err(CliError::data(format!(
            "{} was produced under config {}, current config is {config_hash}",
            path.display(),
            p.config_hash
        )));
    }
    Ok(p)
}

/// Output files of one command. Each file lands by rename once fully
/// written; if the command fails before [`Outputs::commit`], every file
/// it wrote is removed again.
pub struct Outputs {
    written: Vec<PathBuf>,
    provenance: Provenance,
    committed: bool,
}

impl Outputs {
    pub fn new(config_hash: &str, command: &str, args: serde_json::Value) -> Self {
        Self {
            written: Vec::new(),
            provenance: Provenance {
                config_hash: config_hash.to_string(),
                command: command.to_string(),
                args,
            },
            committed: false,
        }
    }

    pub fn config_hash(&self) -> &str {
        &self.provenance.config_hash
    }

    fn put(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(format!(".tmp-{}", std::process::id()));
        let tmp = PathBuf::from(tmp);
        let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
        if let Err(e) = res {
            let _ = fs::remove_file(&tmp);
            return Err(CliError::data(format!("writing {}: {e}", path.display())));
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Writes `bytes` to `path` and its provenance sidecar.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        self.put(path, bytes)?;
        let side = serde_json::to_vec_pretty(&self.provenance)?;
        self.put(&sidecar_path(path), &side)
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}
