//! Logistic regression and random forest baselines on binary fingerprints.
//!
//! Neither model uses class weights. Both consume fingerprints directly and
//! predict the probability of the active class.

mod forest;
mod logreg;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::Fingerprint;

pub use forest::{gini, gini_gain, train_random_forest, ForestConfig, ForestModel, Node, Tree};
pub use logreg::{train_logreg, LogRegConfig, LogRegModel};

pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A trained baseline of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Baseline {
    Logreg(LogRegModel),
    Forest(ForestModel),
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    family: String,
    input_width: usize,
    file: String,
}

impl Baseline {
    pub fn family(&self) -> &'static str {
        match self {
            Baseline::Logreg(_) => "logreg",
            Baseline::Forest(_) => "forest",
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Baseline::Logreg(m) => m.weights.len(),
            Baseline::Forest(m) => m.input_width,
        }
    }

    pub fn predict_proba(&self, features: &[Fingerprint]) -> Result<Vec<f64>, BaselineError> {
        match self {
            Baseline::Logreg(m) => m.predict_proba(features),
            Baseline::Forest(m) => m.predict_proba(features),
        }
    }

    /// Write `model.json` plus `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), BaselineError> {
        let io = |e| BaselineError::Io {
            path: dir.display().to_string(),
            source: e,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let body = serde_json::to_string(self).map_err(|e| BaselineError::Format(e.to_string()))?;
        fs::write(dir.join(MODEL_FILE), body + "\n").map_err(io)?;
        let manifest = Manifest {
            version: FORMAT_VERSION,
            family: self.family().to_string(),
            input_width: self.input_width(),
            file: MODEL_FILE.to_string(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| BaselineError::Format(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), json + "\n").map_err(io)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Baseline, BaselineError> {
        let read = |p: &Path| {
            fs::read(p).map_err(|e| BaselineError::Io {
                path: p.display().to_string(),
                source: e,
            })
        };
        let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)
            .map_err(|e| BaselineError::Format(e.to_string()))?;
        if manifest.version != FORMAT_VERSION {
            return Err(BaselineError::Format(format!("unsupported version {}", manifest.version)));
        }
        let model: Baseline = serde_json::from_slice(&read(&dir.join(&manifest.file))?)
            .map_err(|e| BaselineError::Format(e.to_string()))?;
        if model.family() != manifest.family || model.input_width() != manifest.input_width {
            return Err(BaselineError::Format("manifest does not match model".into()));
        }
        Ok(model)
    }
}

fn check_training(features: &[Fingerprint], labels: &[u8]) -> Result<usize, BaselineError> {
    let Some(first) = features.first() else {
        return Err(BaselineError::EmptyInput("no training examples".into()));
    };
    if labels.len() != features.len() {
        return Err(BaselineError::ShapeMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    check_width(features, first.width())?;
    Ok(first.width())
}

fn check_width(features: &[Fingerprint], width: usize) -> Result<(), BaselineError> {
    match features.iter().find(|f| f.width() != width) {
        Some(f) => Err(BaselineError::ShapeMismatch {
            expected: width,
            found: f.width(),
        }),
        None => Ok(()),
    }
}

fn bit_lists(features: &[Fingerprint]) -> Vec<Vec<u32>> {
    features.iter().map(|f| f.ones().map(|b| b as u32).collect()).collect()
}
