//! Run manifests: inputs, seed, and content hashes of every output file,
//! verifiable after the fact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Record an output file living inside the run directory.
    pub fn add_output(&mut self, run_dir: &Path, name: &str) -> Result<()> {
        self.outputs.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_file(&run_dir.join(name))?,
        });
        Ok(())
    }

    pub fn write(&self, run_dir: &Path) -> Result<PathBuf> {
        let path = run_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json.as_bytes())?;
        Ok(path)
    }
}

/// Re-hash every output named in `run_dir/manifest.json` and fail on any
/// mismatch or missing file.
pub fn verify_manifest(run_dir: &Path) -> Result<Manifest> {
    let path = run_dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    for entry in &manifest.outputs {
        let file = run_dir.join(&entry.path);
        let got = sha256_file(&file)?;
        if got != entry.sha256 {
            bail!(
                "hash mismatch for {}: manifest {} vs file {}",
                entry.path,
                entry.sha256,
                got
            );
        }
    }
    Ok(manifest)
}
