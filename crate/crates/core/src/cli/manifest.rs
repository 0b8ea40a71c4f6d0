//! Run manifest: what was run, when, and the checksum of every file produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducedFile {
    /// Relative to the output directory, with `/` separators.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub files: Vec<ProducedFile>,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, started: f64) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started,
            finished: started,
            files: Vec::new(),
        }
    }

    /// Checksums every listed file under `root`, in the given order.
    pub fn record(&mut self, root: &Path, files: &[PathBuf]) -> Result<()> {
        for rel in files {
            let full = root.join(rel);
            self.files.push(ProducedFile {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: fs::metadata(&full)?.len(),
                sha256: sha256_file(&full)?,
            });
        }
        Ok(())
    }

    /// Stamps the end time and writes `manifest.json` through a temporary file and
    /// a rename, so readers never see a partial manifest.
    pub fn finish(mut self, root: &Path) -> Result<Self> {
        self.finished = now();
        write_atomic(&root.join(MANIFEST_FILE), serde_json::to_string_pretty(&self).unwrap().as_bytes())?;
        Ok(self)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
