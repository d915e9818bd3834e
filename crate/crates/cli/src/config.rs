//! Experiment configuration files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mtbench_core::chem::FingerprintParams;
use mtbench_core::data::SyntheticSpec;
use mtbench_core::eval::{BaselineConfigs, ModelFamily};
use mtbench_core::mtnn::{Architecture, TrainConfig};
use mtbench_core::split::{Regime, DEFAULT_FRACTIONS};
use mtbench_core::stats::DEFAULT_ALPHA;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// One CSV per task; relative paths resolve against the config file.
    Paths(Vec<PathBuf>),
    Synthetic(SyntheticSpec),
}

/// Optional overrides of the default training recipe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub max_steps: Option<usize>,
    pub checkpoint_interval: Option<usize>,
}

impl TrainOverrides {
    pub fn touches_checkpoints(&self) -> bool {
        self.max_steps.is_some() || self.checkpoint_interval.is_some()
    }

    pub fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.dropout {
            base.dropout = v;
        }
        if let Some(v) = self.max_steps {
            base.max_steps = v;
        }
        if let Some(v) = self.checkpoint_interval {
            base.checkpoint_interval = v;
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Required for network families, ignored by baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<Architecture>,
    /// Defaults to [`ModelSpec::default_name`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ModelSpec {
    /// `w-mtnn-2000-100`, `forest`, ...
    pub fn default_name(&self) -> String {
        match (&self.architecture, self.family.is_network()) {
            (Some(a), true) => {
                let dims: Vec<String> = a.hidden().iter().map(|d| d.to_string()).collect();
                format!("{}-{}", self.family, dims.join("-"))
            }
            _ => self.family.to_string(),
        }
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.default_name())
    }

    /// Architecture used for networks; `None` for baselines.
    pub fn network_arch(&self) -> Option<&Architecture> {
        self.architecture.as_ref().filter(|_| self.family.is_network())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Featurization of CSV inputs; synthetic data carries its own.
    #[serde(default)]
    pub fingerprint: FingerprintParams,
    pub regime: Regime,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub baselines: BaselineConfigs,
    /// Focus tasks of the non-leaky regime, one sub-run each.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub focus_tasks: Vec<String>,
    /// Folds of the random-kfold regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_fractions")]
    pub fractions: (f64, f64, f64),
    /// Pairs of model names; defaults to the first model against each other one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<(String, String)>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_fractions() -> (f64, f64, f64) {
    DEFAULT_FRACTIONS
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl ExperimentConfig {
    /// Parse and validate; relative data paths are resolved against the
    /// directory of `path`.
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = ExperimentConfig::from_json(&text)?;
        if let DataSource::Paths(paths) = &mut config.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        for m in &self.models {
            if m.family.is_network() && m.architecture.is_none() {
                return bad(format!("model {} needs an architecture", m.family));
            }
        }
        let names: Vec<String> = self.models.iter().map(ModelSpec::name).collect();
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return bad(format!("model names must be unique: {names:?}"));
        }
        for (a, b) in &self.comparisons {
            for n in [a, b] {
                if !names.contains(n) {
                    return bad(format!("comparison refers to unknown model {n:?}"));
                }
            }
        }
        match self.regime {
            Regime::NonLeakyTemporal if self.focus_tasks.is_empty() => {
                return bad("non-leaky-temporal requires focus_tasks".into());
            }
            Regime::NonLeakyTemporal => {
                let unique: BTreeSet<&String> = self.focus_tasks.iter().collect();
                if unique.len() != self.focus_tasks.len() {
                    return bad("focus_tasks contains duplicates".into());
                }
            }
            _ if !self.focus_tasks.is_empty() => {
                return bad(format!("focus_tasks only applies to non-leaky-temporal, not {}", self.regime));
            }
            _ => {}
        }
        match (self.regime, self.k) {
            (Regime::RandomKfold, Some(k)) if k < 2 => return bad(format!("k must be at least 2, got {k}")),
            (Regime::RandomKfold, _) => {}
            (_, Some(_)) => return bad("k only applies to random-kfold".into()),
            _ => {}
        }
        let (a, b, c) = self.fractions;
        if [a, b, c].iter().any(|f| !(*f > 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return bad(format!("fractions {:?} must be positive and sum to 1", self.fractions));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        let t = self.train_config();
        if t.learning_rate <= 0.0 || t.batch_size == 0 || !(0.0..1.0).contains(&t.dropout) {
            return bad(format!("invalid training overrides {:?}", self.train));
        }
        if t.max_steps == 0 || t.checkpoint_interval == 0 || t.checkpoint_interval > t.max_steps {
            return bad("max_steps and checkpoint_interval must be positive, interval <= max_steps".into());
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(DEFAULT_K)
    }

    /// Default recipe with overrides applied; the seed and task weighting
    /// are filled in per model.
    pub fn train_config(&self) -> TrainConfig {
        self.train.apply(TrainConfig::default())
    }

    /// Configured comparisons, or the first model against every other one.
    pub fn comparison_pairs(&self) -> Vec<(String, String)> {
        if !self.comparisons.is_empty() {
            return self.comparisons.clone();
        }
        let names: Vec<String> = self.models.iter().map(ModelSpec::name).collect();
        names[1..].iter().map(|b| (names[0].clone(), b.clone())).collect()
    }

    /// Warnings about settings that some models ignore.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for m in &self.models {
            if !m.family.is_network() {
                if self.train.touches_checkpoints() {
                    out.push(format!("model {}: {} ignores checkpoint settings", m.name(), m.family));
                }
                if m.architecture.is_some() {
                    out.push(format!("model {}: {} ignores the architecture", m.name(), m.family));
                }
            }
        }
        out
    }
}
