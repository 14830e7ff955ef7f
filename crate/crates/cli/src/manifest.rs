//! Per-stage JSON manifests and the up-to-date check used to skip stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the configuration base directory when possible.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, f64>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn display_path(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub fn digests(base: &Path, files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                path: display_path(base, f),
                sha256: file_sha256(f)?,
            })
        })
        .collect()
}

fn mtime(p: &Path) -> Option<SystemTime> {
    fs::metadata(p).and_then(|m| m.modified()).ok()
}

/// A stage can be skipped when its manifest matches the current config,
/// every output exists with the recorded digest and is no older than any
/// input, and the inputs still hash to the recorded digests.
pub fn is_up_to_date(
    manifest_path: &Path,
    base: &Path,
    config: &BTreeMap<String, String>,
    inputs: &[PathBuf],
) -> bool {
    let Ok(text) = fs::read_to_string(manifest_path) else {
        return false;
    };
    let Ok(m) = serde_json::from_str::<Manifest>(&text) else {
        return false;
    };
    if &m.config != config || m.version != env!("CARGO_PKG_VERSION") {
        return false;
    }
    let Ok(current) = digests(base, inputs) else {
        return false;
    };
    if current != m.inputs {
        return false;
    }
    let newest_input = inputs.iter().filter_map(|p| mtime(p)).max();
    m.outputs.iter().all(|o| {
        let p = base.join(&o.path);
        let fresh = match (mtime(&p), newest_input) {
            (Some(out), Some(inp)) => out >= inp,
            (Some(_), None) => true,
            _ => false,
        };
        fresh && file_sha256(&p).map(|d| d == o.sha256).unwrap_or(false)
    })
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
