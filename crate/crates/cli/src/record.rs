use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hduva_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything needed to replay a command: its arguments, the resolved
/// configuration and hashes of what it read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<String>,
    pub manifest_hash: Option<String>,
    pub checkpoint_path: Option<PathBuf>,
    pub metrics_csv_path: Option<PathBuf>,
    /// SHA-256 of every output file, keyed by path.
    pub outputs: BTreeMap<String, String>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl RunRecord {
    pub fn new(command: &str, args: &[String]) -> Self {
        Self {
            run_id: String::new(),
            command: command.to_string(),
            args: args.to_vec(),
            config: None,
            manifest_hash: None,
            checkpoint_path: None,
            metrics_csv_path: None,
            outputs: BTreeMap::new(),
        }
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Fill in the run id (hash of the command, arguments and config) and
    /// write `run_record.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        for a in &self.args {
            h.update(a.as_bytes());
            h.update([0]);
        }
        h.update(self.config.as_deref().unwrap_or("").as_bytes());
        self.run_id = hex::encode(&h.finalize()[..8]);
        let path = dir.join("run_record.json");
        let json = serde_json::to_vec_pretty(&self).map_err(|e| Error::State(e.to_string()))?;
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(&path, json).map_err(|e| Error::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(path)
    }
}
