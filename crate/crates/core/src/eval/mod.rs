//! ROC AUC, checkpoint selection and the evaluation pipeline.

mod pipeline;

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::data::{DataError, MultitaskMatrix, Subset};
use crate::mtnn::{predict, Architecture, CheckpointStore, MtnnError, Scalar};
use crate::split::Regime;

pub use pipeline::{
    evaluate, evaluate_kfold, train_family, BaselineConfigs, ModelFamily, NetworkArtifact, TrainedModels,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}: both classes are needed")]
    SingleClass(String),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("checkpoint store is empty")]
    EmptyStore,
    #[error("checkpoint schedules differ between folds")]
    ScheduleMismatch,
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("training diverged at step {step} ({model})")]
    NonFinite { model: String, step: usize },
    #[error("result table: {0}")]
    Table(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] MtnnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Mann–Whitney AUC: the fraction of (active, inactive) pairs ordered
/// correctly, with ties counting one half. Computed by sorting, and exactly
/// equal to the quadratic pair count.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore);
    }
    let n_active = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_inactive = labels.len() as u64 - n_active;
    if n_active == 0 || n_inactive == 0 {
        return Err(EvalError::SingleClass("AUC".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the number of correctly ordered pairs, so ties stay integral.
    let mut twice_correct: u128 = 0;
    let mut inactive_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut a, mut b) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                a += 1;
            } else {
                b += 1;
            }
            j += 1;
        }
        twice_correct += 2 * a as u128 * inactive_below as u128 + a as u128 * b as u128;
        inactive_below += b;
        i = j;
    }
    Ok(twice_correct as f64 / (2 * n_active as u128 * n_inactive as u128) as f64)
}

/// Index of the earliest maximum.
fn earliest_max(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Active-class scores and labels of `task` over its measured rows.
pub fn task_scores<S: Scalar>(
    params: &crate::mtnn::ModelParams<S>,
    matrix: &MultitaskMatrix,
    task: &str,
) -> Result<(Vec<f64>, Vec<u8>), EvalError> {
    let t = matrix.task_position(task).ok_or_else(|| EvalError::UnknownTask(task.into()))?;
    let head = params.tasks.iter().position(|n| n == task).ok_or_else(|| EvalError::UnknownTask(task.into()))?;
    let rows = matrix.measured_rows(t);
    let features: Vec<_> = rows.iter().map(|&r| matrix.features[r].clone()).collect();
    let probs = predict(params, &features)?;
    Ok((probs.task_scores(head), rows.iter().map(|&r| matrix.label(r, t)).collect()))
}

/// AUC of every task at every checkpoint, `None` where a task's subset
/// lacks a class. Each checkpoint is run once over all rows of `matrix`.
pub fn checkpoint_aucs<S: Scalar>(
    store: &CheckpointStore<S>,
    matrix: &MultitaskMatrix,
    tasks: &[String],
) -> Result<Vec<(usize, Vec<Option<f64>>)>, EvalError> {
    let mut columns = Vec::new();
    for task in tasks {
        let t = matrix.task_position(task).ok_or_else(|| EvalError::UnknownTask(task.clone()))?;
        let rows = matrix.measured_rows(t);
        let labels: Vec<u8> = rows.iter().map(|&r| matrix.label(r, t)).collect();
        columns.push((t, rows, labels));
    }
    let mut out = Vec::with_capacity(store.len());
    for c in store.checkpoints() {
        let probs = predict(&c.params, &matrix.features)?;
        let mut aucs = Vec::with_capacity(tasks.len());
        for (task, (_, rows, labels)) in tasks.iter().zip(&columns) {
            let head = c
                .params
                .tasks
                .iter()
                .position(|n| n == task)
                .ok_or_else(|| EvalError::UnknownTask(task.clone()))?;
            let scores: Vec<f64> = rows.iter().map(|&r| probs.active(r, head)).collect();
            aucs.push(match roc_auc(&scores, labels) {
                Ok(a) => Some(a),
                Err(EvalError::SingleClass(_)) => None,
                Err(e) => return Err(e),
            });
        }
        out.push((c.step, aucs));
    }
    Ok(out)
}

/// Earliest step reaching the maximum AUC.
pub fn select_from_aucs(steps: &[usize], aucs: &[f64]) -> Option<(usize, f64)> {
    earliest_max(aucs).map(|i| (steps[i], aucs[i]))
}

/// Checkpoint with the best validation AUC for `task`, earliest on ties.
pub fn select_checkpoint<S: Scalar>(
    store: &CheckpointStore<S>,
    valid: &MultitaskMatrix,
    task: &str,
) -> Result<(usize, f64), EvalError> {
    if store.is_empty() {
        return Err(EvalError::EmptyStore);
    }
    let per_step = checkpoint_aucs(store, valid, &[task.to_string()])?;
    let steps: Vec<usize> = per_step.iter().map(|(s, _)| *s).collect();
    let aucs = per_step
        .iter()
        .map(|(_, a)| a[0].ok_or_else(|| EvalError::SingleClass(format!("validation subset of {task}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(select_from_aucs(&steps, &aucs).expect("non-empty store"))
}

/// Step maximizing the mean AUC over folds, earliest on ties.
/// `fold_aucs[f][i]` is fold `f`'s AUC at `steps[i]`.
pub fn target_step_from_aucs(steps: &[usize], fold_aucs: &[Vec<f64>]) -> Option<(usize, f64)> {
    if fold_aucs.is_empty() || fold_aucs.iter().any(|f| f.len() != steps.len()) {
        return None;
    }
    let means: Vec<f64> = (0..steps.len())
        .map(|i| fold_aucs.iter().map(|f| f[i]).sum::<f64>() / fold_aucs.len() as f64)
        .collect();
    select_from_aucs(steps, &means)
}

/// Common checkpoint step maximizing the mean test AUC over folds.
pub fn target_step_eval<S: Scalar>(
    stores: &[&CheckpointStore<S>],
    tests: &[&MultitaskMatrix],
    task: &str,
) -> Result<(usize, f64), EvalError> {
    let Some(first) = stores.first() else {
        return Err(EvalError::EmptyStore);
    };
    if first.is_empty() {
        return Err(EvalError::EmptyStore);
    }
    let steps = first.steps();
    if stores.len() != tests.len() || stores.iter().any(|s| s.steps() != steps) {
        return Err(EvalError::ScheduleMismatch);
    }
    let mut fold_aucs = Vec::with_capacity(stores.len());
    for (store, test) in stores.iter().zip(tests) {
        let per_step = checkpoint_aucs(store, test, &[task.to_string()])?;
        fold_aucs.push(
            per_step
                .iter()
                .map(|(_, a)| a[0].ok_or_else(|| EvalError::SingleClass(format!("test fold of {task}"))))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(target_step_from_aucs(&steps, &fold_aucs).expect("non-empty schedule"))
}

/// Outcome for one task. `auc` is `None` when it could not be computed;
/// `note` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEval {
    pub task: String,
    pub step: Option<usize>,
    pub auc: Option<f64>,
    pub n_active: usize,
    pub n_inactive: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: ModelFamily,
    pub arch: Option<Architecture>,
    pub regime: Regime,
    pub subset: Subset,
    pub tasks: Vec<TaskEval>,
}

pub const EVAL_HEADER: [&str; 8] = ["task", "model", "arch", "regime", "step", "auc", "n_active", "n_inactive"];

impl EvalResult {
    pub fn task(&self, name: &str) -> Option<&TaskEval> {
        self.tasks.iter().find(|t| t.task == name)
    }

    /// CSV with columns [`EVAL_HEADER`]; undefined values are empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let table = |e: csv::Error| EvalError::Table(e.to_string());
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(EVAL_HEADER).map_err(table)?;
        let arch = self.arch.as_ref().map(|a| a.to_string()).unwrap_or_default();
        for t in &self.tasks {
            w.write_record([
                t.task.clone(),
                self.model.to_string(),
                arch.clone(),
                self.regime.to_string(),
                t.step.map(|s| s.to_string()).unwrap_or_default(),
                t.auc.map(|a| a.to_string()).unwrap_or_default(),
                t.n_active.to_string(),
                t.n_inactive.to_string(),
            ])
            .map_err(table)?;
        }
        w.flush().map_err(|e| EvalError::Table(e.to_string()))?;
        Ok(())
    }

    /// Parse a table written by [`EvalResult::write_csv`]. All rows must share
    /// model, architecture and regime. The subset is taken to be test.
    pub fn read_csv<R: Read>(reader: R) -> Result<EvalResult, EvalError> {
        let table = |m: String| EvalError::Table(m);
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(|e| table(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != EVAL_HEADER {
            return Err(table(format!("unexpected header {header:?}")));
        }
        let mut meta: Option<(String, String, String)> = None;
        let mut tasks = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| table(e.to_string()))?;
            let key = (rec[1].to_string(), rec[2].to_string(), rec[3].to_string());
            match &meta {
                None => meta = Some(key),
                Some(m) if *m != key => return Err(table("rows describe different runs".into())),
                _ => {}
            }
            let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
            let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| table(format!("{s:?}: {e}")));
            tasks.push(TaskEval {
                task: rec[0].to_string(),
                step: opt(&rec[4]).map(|s| parse_usize(&s)).transpose()?,
                auc: opt(&rec[5])
                    .map(|s| s.parse::<f64>().map_err(|e| table(format!("{s:?}: {e}"))))
                    .transpose()?,
                n_active: parse_usize(&rec[6])?,
                n_inactive: parse_usize(&rec[7])?,
                note: None,
            });
        }
        let (model, arch, regime) = meta.ok_or_else(|| table("no rows".into()))?;
        Ok(EvalResult {
            model: model.parse()?,
            arch: (!arch.is_empty())
                .then(|| Architecture::from_str(&arch))
                .transpose()?,
            regime: regime.parse().map_err(|e: crate::split::SplitError| table(e.to_string()))?,
            subset: Subset::Test,
            tasks,
        })
    }
}
