use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{checkpoint_aucs, roc_auc, select_from_aucs, target_step_eval, EvalError, EvalResult, TaskEval};
use crate::baselines::{train_logreg, train_random_forest, Baseline, ForestConfig, LogRegConfig};
use crate::data::{assemble_dense, Collection, MultitaskMatrix, Subset};
use crate::mtnn::{
    init_model, task_weights_from_counts, train_from, Architecture, CheckpointStore, TaskWeighting, TrainConfig,
    TrainError,
};
use crate::rng::derive_seed;
use crate::split::SplitAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    /// One network per task.
    Stnn,
    /// One network over all tasks, unweighted.
    UMtnn,
    /// One network over all tasks, tasks weighted by inverse training size.
    WMtnn,
    Logreg,
    Forest,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Stnn,
        ModelFamily::UMtnn,
        ModelFamily::WMtnn,
        ModelFamily::Logreg,
        ModelFamily::Forest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Stnn => "stnn",
            ModelFamily::UMtnn => "u-mtnn",
            ModelFamily::WMtnn => "w-mtnn",
            ModelFamily::Logreg => "logreg",
            ModelFamily::Forest => "forest",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, ModelFamily::Stnn | ModelFamily::UMtnn | ModelFamily::WMtnn)
    }

    pub fn weighting(self) -> TaskWeighting {
        match self {
            ModelFamily::WMtnn => TaskWeighting::InverseSize,
            _ => TaskWeighting::Uniform,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EvalError::Table(format!("unknown model family {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfigs {
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
}

/// One trained network and the tasks its heads predict.
#[derive(Debug, Clone)]
pub struct NetworkArtifact {
    pub tasks: Vec<String>,
    pub store: CheckpointStore<f32>,
}

#[derive(Debug, Clone)]
pub enum TrainedModels {
    Networks(Vec<NetworkArtifact>),
    /// One model per task, in task order.
    Baselines(Vec<(String, Baseline)>),
}

fn wanted(assignment: &SplitAssignment, only: Option<&[String]>) -> Vec<String> {
    assignment
        .retained_tasks()
        .map(|t| t.task.clone())
        .filter(|t| only.is_none_or(|o| o.contains(t)))
        .collect()
}

fn train_network(
    matrix: &MultitaskMatrix,
    arch: &Architecture,
    config: &TrainConfig,
    weighting: TaskWeighting,
    label: &str,
) -> Result<NetworkArtifact, EvalError> {
    let weights = task_weights_from_counts(&matrix.tasks, &matrix.task_counts(), weighting)?;
    let params = init_model(arch, matrix.width(), matrix.tasks.clone(), derive_seed(config.seed, 0))?;
    match train_from(params, matrix, &weights, config) {
        Ok(store) => Ok(NetworkArtifact {
            tasks: matrix.tasks.clone(),
            store,
        }),
        Err(TrainError::NonFiniteLoss { step, .. }) => Err(EvalError::NonFinite {
            model: label.to_string(),
            step,
        }),
        Err(TrainError::Invalid(e)) => Err(e.into()),
    }
}

/// Train one model family on the training subset of `assignment`.
///
/// Multitask families train a single network on every retained task.
/// Single-task networks and baselines are trained per task, restricted to
/// `only` when given; independent tasks run on the rayon pool.
pub fn train_family(
    collection: &Collection,
    assignment: &SplitAssignment,
    family: ModelFamily,
    arch: &Architecture,
    config: &TrainConfig,
    baselines: &BaselineConfigs,
    only: Option<&[String]>,
) -> Result<TrainedModels, EvalError> {
    let train = assemble_dense(collection, assignment, Subset::Train)?;
    let tasks = wanted(assignment, only);
    let column = |name: &String| train.task_position(name).ok_or_else(|| EvalError::UnknownTask(name.clone()));
    match family {
        ModelFamily::UMtnn | ModelFamily::WMtnn => {
            let net = train_network(&train, arch, config, family.weighting(), family.as_str())?;
            Ok(TrainedModels::Networks(vec![net]))
        }
        ModelFamily::Stnn => {
            let nets = tasks
                .par_iter()
                .map(|name| {
                    let single = train.single_task(column(name)?);
                    train_network(&single, arch, config, TaskWeighting::Uniform, &format!("stnn {name}"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TrainedModels::Networks(nets))
        }
        ModelFamily::Logreg | ModelFamily::Forest => {
            let models = tasks
                .par_iter()
                .map(|name| {
                    let single = train.single_task(column(name)?);
                    let labels: Vec<u8> = (0..single.n_rows()).map(|r| single.label(r, 0)).collect();
                    let model = match family {
                        ModelFamily::Logreg => Baseline::Logreg(train_logreg(&single.features, &labels, &baselines.logreg)?),
                        _ => Baseline::Forest(train_random_forest(&single.features, &labels, &baselines.forest)?),
                    };
                    Ok((name.clone(), model))
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(TrainedModels::Baselines(models))
        }
    }
}

fn counts(matrix: &MultitaskMatrix, task: &str) -> (usize, usize) {
    match matrix.task_position(task) {
        Some(t) => {
            let rows = matrix.measured_rows(t);
            let active = rows.iter().filter(|&&r| matrix.label(r, t) == 1).count();
            (active, rows.len() - active)
        }
        None => (0, 0),
    }
}

fn failed(task: &str, n: (usize, usize), note: String) -> TaskEval {
    warn!("{task}: {note}");
    TaskEval {
        task: task.to_string(),
        step: None,
        auc: None,
        n_active: n.0,
        n_inactive: n.1,
        note: Some(note),
    }
}

fn baseline_auc(model: &Baseline, test: &MultitaskMatrix, task: &str) -> Result<f64, EvalError> {
    let t = test.task_position(task).ok_or_else(|| EvalError::UnknownTask(task.into()))?;
    let rows = test.measured_rows(t);
    let features: Vec<_> = rows.iter().map(|&r| test.features[r].clone()).collect();
    let labels: Vec<u8> = rows.iter().map(|&r| test.label(r, t)).collect();
    roc_auc(&model.predict_proba(&features)?, &labels)
}

/// Score trained models on the test subset of `assignment`.
///
/// Networks: each task picks the checkpoint with the best validation AUC
/// (earliest on ties) and is scored on test there, so tasks sharing a
/// network may report different steps. Baselines are scored directly. A
/// task whose subsets lack a class is reported without an AUC; the others
/// are unaffected.
pub fn evaluate(
    collection: &Collection,
    assignment: &SplitAssignment,
    family: ModelFamily,
    arch: Option<&Architecture>,
    trained: &TrainedModels,
    only: Option<&[String]>,
) -> Result<EvalResult, EvalError> {
    let test = assemble_dense(collection, assignment, Subset::Test)?;
    let tasks = wanted(assignment, only);
    let mut results: BTreeMap<String, TaskEval> = BTreeMap::new();
    match trained {
        TrainedModels::Networks(nets) => {
            let valid = assemble_dense(collection, assignment, Subset::Valid)?;
            for net in nets {
                let mine: Vec<String> = net.tasks.iter().filter(|t| tasks.contains(t)).cloned().collect();
                if mine.is_empty() {
                    continue;
                }
                let present: Vec<String> = mine.iter().filter(|t| valid.task_position(t).is_some()).cloned().collect();
                let per_step = checkpoint_aucs(&net.store, &valid, &present)?;
                let steps: Vec<usize> = per_step.iter().map(|(s, _)| *s).collect();
                for (i, task) in present.iter().enumerate() {
                    let n = counts(&test, task);
                    let aucs: Option<Vec<f64>> = per_step.iter().map(|(_, a)| a[i]).collect();
                    let Some(aucs) = aucs else {
                        results.insert(task.clone(), failed(task, n, "validation subset lacks a class".into()));
                        continue;
                    };
                    let Some((step, _)) = select_from_aucs(&steps, &aucs) else {
                        results.insert(task.clone(), failed(task, n, "no checkpoints".into()));
                        continue;
                    };
                    let params = &net.store.at_step(step).expect("selected from the store").params;
                    let eval = match super::task_scores(params, &test, task).and_then(|(s, y)| roc_auc(&s, &y)) {
                        Ok(auc) => TaskEval {
                            task: task.clone(),
                            step: Some(step),
                            auc: Some(auc),
                            n_active: n.0,
                            n_inactive: n.1,
                            note: None,
                        },
                        Err(e) => failed(task, n, format!("test subset: {e}")),
                    };
                    results.insert(task.clone(), eval);
                }
            }
        }
        TrainedModels::Baselines(models) => {
            for (task, model) in models.iter().filter(|(t, _)| tasks.contains(t)) {
                let n = counts(&test, task);
                let eval = match baseline_auc(model, &test, task) {
                    Ok(auc) => TaskEval {
                        task: task.clone(),
                        step: None,
                        auc: Some(auc),
                        n_active: n.0,
                        n_inactive: n.1,
                        note: None,
                    },
                    Err(e) => failed(task, n, format!("test subset: {e}")),
                };
                results.insert(task.clone(), eval);
            }
        }
    }
    let ordered = tasks
        .iter()
        .map(|t| {
            results
                .remove(t)
                .unwrap_or_else(|| failed(t, counts(&test, t), "no trained model covers this task".into()))
        })
        .collect();
    Ok(EvalResult {
        model: family,
        arch: family.is_network().then(|| arch.cloned()).flatten(),
        regime: assignment.regime,
        subset: Subset::Test,
        tasks: ordered,
    })
}

/// Cross-validated evaluation: `assignments[f]` and `trained[f]` describe
/// fold `f`. Networks report the common checkpoint step maximizing the
/// fold-mean test AUC; baselines report the fold-mean test AUC. Counts are
/// summed over the test folds.
pub fn evaluate_kfold(
    collection: &Collection,
    assignments: &[SplitAssignment],
    family: ModelFamily,
    arch: Option<&Architecture>,
    trained: &[TrainedModels],
    only: Option<&[String]>,
) -> Result<EvalResult, EvalError> {
    let Some(first) = assignments.first() else {
        return Err(EvalError::EmptyStore);
    };
    if assignments.len() != trained.len() {
        return Err(EvalError::ScheduleMismatch);
    }
    let tests = assignments
        .iter()
        .map(|a| assemble_dense(collection, a, Subset::Test))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = wanted(first, only);
    let mut out = Vec::with_capacity(tasks.len());
    for task in &tasks {
        let n = tests.iter().map(|m| counts(m, task)).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let eval = match fold_task(&tests, trained, task) {
            Ok((step, auc)) => TaskEval {
                task: task.clone(),
                step,
                auc: Some(auc),
                n_active: n.0,
                n_inactive: n.1,
                note: None,
            },
            Err(e) => failed(task, n, e.to_string()),
        };
        out.push(eval);
    }
    Ok(EvalResult {
        model: family,
        arch: family.is_network().then(|| arch.cloned()).flatten(),
        regime: first.regime,
        subset: Subset::Test,
        tasks: out,
    })
}

fn fold_task(
    tests: &[MultitaskMatrix],
    trained: &[TrainedModels],
    task: &str,
) -> Result<(Option<usize>, f64), EvalError> {
    let missing = || EvalError::UnknownTask(task.to_string());
    match &trained[0] {
        TrainedModels::Networks(_) => {
            let mut stores = Vec::with_capacity(trained.len());
            for t in trained {
                let TrainedModels::Networks(nets) = t else {
                    return Err(EvalError::ScheduleMismatch);
                };
                let net = nets.iter().find(|n| n.tasks.iter().any(|x| x == task)).ok_or_else(missing)?;
                stores.push(&net.store);
            }
            let tests: Vec<&MultitaskMatrix> = tests.iter().collect();
            let (step, auc) = target_step_eval(&stores, &tests, task)?;
            Ok((Some(step), auc))
        }
        TrainedModels::Baselines(_) => {
            let mut total = 0.0;
            for (t, test) in trained.iter().zip(tests) {
                let TrainedModels::Baselines(models) = t else {
                    return Err(EvalError::ScheduleMismatch);
                };
                let (_, model) = models.iter().find(|(name, _)| name == task).ok_or_else(missing)?;
                total += baseline_auc(model, test, task)?;
            }
            Ok((None, total / trained.len() as f64))
        }
    }
}
