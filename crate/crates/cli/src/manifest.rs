use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Record of one stage run: resolved configuration, seed and content
/// hashes. No timestamps, so identical runs give identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect(path: &Path, base: &Path, out: &mut BTreeMap<String, String>) -> CliResult<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            collect(&p, base, out)?;
        }
    } else {
        let key = path.strip_prefix(base).unwrap_or(path).display().to_string();
        out.insert(key, sha256_file(path)?);
    }
    Ok(())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let mut hashes = BTreeMap::new();
        collect(path, Path::new(""), &mut hashes)?;
        self.inputs.extend(hashes);
        Ok(())
    }

    /// Hashes every file under `out` except the manifest itself.
    pub fn write(mut self, out: &Path) -> CliResult<PathBuf> {
        let mut hashes = BTreeMap::new();
        collect(out, out, &mut hashes)?;
        hashes.remove("manifest.json");
        self.artifacts = hashes;
        let path = out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).map_err(crisiskd::Error::from)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path.display().to_string(), e))?;
        Ok(path)
    }
}
