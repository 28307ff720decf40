//! Artifact envelope and atomic file writes.
//!
//! Every output embeds the tool version, the master seed, and the resolved
//! config hash. Files are written to a temporary sibling and renamed into
//! place, so a crash mid-write never leaves a truncated artifact, and
//! concurrent units of work never observe each other's partial output.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Wrapper giving each JSON artifact the same traceability header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub payload: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(seed: u64, config_hash: &str, payload: T) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config_hash.to_string(),
            payload,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

impl<T: DeserializeOwned> Artifact<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading artifact {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Write bytes to a temporary sibling, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}
