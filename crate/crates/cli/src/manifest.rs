//! Run manifest: config echo, seeds, content hashes and completed stages.

use std::fs;
use std::path::Path;

use mtbench_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Independent seed streams derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub train: u64,
    pub baselines: u64,
}

impl Seeds {
    pub fn from_root(seed: u64) -> Seeds {
        Seeds {
            data: derive_seed(seed, 0),
            split: derive_seed(seed, 1),
            train: derive_seed(seed, 2),
            baselines: derive_seed(seed, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the run directory for outputs; as configured for inputs.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path, shown: String) -> Result<FileHash, CliError> {
        let content = fs::read(path).map_err(CliError::io(path))?;
        Ok(FileHash {
            path: shown,
            bytes: content.len() as u64,
            sha256: sha256_hex(&content),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub label: String,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    /// Input tables; synthetic collections are hashed as written to `data/`.
    pub inputs: Vec<FileHash>,
    pub units: Vec<String>,
    pub models: Vec<ModelEntry>,
    pub stages: Vec<String>,
    pub warnings: Vec<String>,
    /// Conventions the results depend on.
    pub notes: Vec<String>,
    pub outputs: Vec<FileHash>,
}

pub const NOTES: [&str; 4] = [
    "network loss: mean over the batch, sum over tasks; class weights multiply task weights",
    "non-leaky splits: every task, including validation data for checkpoint selection, uses the focus task cutoffs",
    "random-kfold: networks report the checkpoint step maximizing the fold-mean test AUC, baselines the fold-mean AUC",
    "relatedness: self-pairs are included when a task is compared with itself",
];

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: Seeds::from_root(config.seed),
            inputs: Vec::new(),
            units: Vec::new(),
            models: Vec::new(),
            stages: Vec::new(),
            warnings: Vec::new(),
            notes: NOTES.iter().map(|n| n.to_string()).collect(),
            outputs: Vec::new(),
        }
    }

    /// The manifest in `dir`, if any.
    pub fn load(dir: &Path) -> Result<Option<Manifest>, CliError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(&path))
    }

    pub fn complete(&mut self, stage: &str) {
        if !self.stages.iter().any(|s| s == stage) {
            self.stages.push(stage.to_string());
        }
    }

    /// Record an output file, replacing an earlier hash of the same path.
    pub fn record_output(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        let shown = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        let hash = FileHash::of(path, shown)?;
        match self.outputs.iter_mut().find(|h| h.path == hash.path) {
            Some(h) => *h = hash,
            None => self.outputs.push(hash),
        }
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }
}
