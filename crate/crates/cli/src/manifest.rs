//! Run manifests written beside every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    /// SHA-256 over the parameters and every input file's bytes.
    pub config_digest: String,
    pub params: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    pub provider: Option<String>,
    pub model: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_ms: u128,
    pub wall_clock_ms: u128,
}

/// Digest of the parameters and input contents. Missing inputs hash as empty.
pub fn digest(params: &BTreeMap<String, Value>, inputs: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params)?);
    for path in inputs {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        h.update(path.to_string_lossy().as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = RunManifest::path_for(primary_output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Recomputes the digest from the inputs as they are now.
    pub fn verify(&self) -> Result<bool> {
        Ok(digest(&self.params, &self.inputs)? == self.config_digest)
    }
}
