use std::collections::HashMap;

use super::{Collection, DataError, Label, TaskDataset};
use crate::chem::Fingerprint;
use crate::split::{Bucket, Regime, SplitAssignment};

/// Where the active/inactive ratio for class weighting comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioSource {
    /// Counts over the training rows (temporal regimes).
    SplitLocal,
    /// Counts over the whole task (random cross-validation).
    FullDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    Train,
    Valid,
    Test,
}

impl Subset {
    pub fn bucket(self) -> Bucket {
        match self {
            Subset::Train => Bucket::Train,
            Subset::Valid => Bucket::Valid,
            Subset::Test => Bucket::Test,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Valid => "valid",
            Subset::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ClassWeights {
    active: f64,
    inactive: f64,
}

impl ClassWeights {
    fn from_counts(task: &str, n_active: usize, n_inactive: usize) -> Result<Self, DataError> {
        if n_active == 0 || n_inactive == 0 {
            return Err(DataError::SingleClassTraining { task: task.to_string() });
        }
        let (a, i) = (n_active as f64, n_inactive as f64);
        Ok(if n_active >= n_inactive {
            ClassWeights {
                active: 1.0,
                inactive: a / i,
            }
        } else {
            ClassWeights {
                active: i / a,
                inactive: 1.0,
            }
        })
    }

    fn of(&self, label: Label) -> f64 {
        match label {
            Label::Active => self.active,
            Label::Inactive => self.inactive,
        }
    }
}

fn ratio_for(task: &TaskDataset, training_rows: &[usize], source: RatioSource) -> Result<ClassWeights, DataError> {
    let train_active = training_rows
        .iter()
        .filter(|&&r| task.records[r].label.is_active())
        .count();
    let train_inactive = training_rows.len() - train_active;
    if train_active == 0 || train_inactive == 0 {
        return Err(DataError::SingleClassTraining {
            task: task.name.clone(),
        });
    }
    match source {
        RatioSource::SplitLocal => ClassWeights::from_counts(&task.name, train_active, train_inactive),
        RatioSource::FullDataset => ClassWeights::from_counts(&task.name, task.n_active(), task.n_inactive()),
    }
}

/// Per-record weights for `training_rows` of `task`: the majority class gets
/// 1.0 and the minority class gets majority/minority.
pub fn class_weights(task: &TaskDataset, training_rows: &[usize], source: RatioSource) -> Result<Vec<f64>, DataError> {
    let w = ratio_for(task, training_rows, source)?;
    Ok(training_rows.iter().map(|&r| w.of(task.records[r].label)).collect())
}

/// Dense multitask format: one row per unique compound id, one label and
/// weight column per task. A weight of zero marks a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskMatrix {
    pub tasks: Vec<String>,
    pub compound_ids: Vec<String>,
    pub features: Vec<Fingerprint>,
    labels: Vec<u8>,
    weights: Vec<f64>,
}

impl MultitaskMatrix {
    pub fn new(
        tasks: Vec<String>,
        compound_ids: Vec<String>,
        features: Vec<Fingerprint>,
        labels: Vec<u8>,
        weights: Vec<f64>,
    ) -> Self {
        let n = compound_ids.len();
        assert_eq!(features.len(), n);
        assert_eq!(labels.len(), n * tasks.len());
        assert_eq!(weights.len(), n * tasks.len());
        assert!(weights.iter().all(|w| *w >= 0.0 && w.is_finite()));
        MultitaskMatrix {
            tasks,
            compound_ids,
            features,
            labels,
            weights,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.compound_ids.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn width(&self) -> usize {
        self.features.first().map_or(0, Fingerprint::width)
    }

    pub fn label(&self, row: usize, task: usize) -> u8 {
        self.labels[row * self.tasks.len() + task]
    }

    pub fn weight(&self, row: usize, task: usize) -> f64 {
        self.weights[row * self.tasks.len() + task]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn task_position(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t == name)
    }

    /// Rows carrying a measurement for `task`.
    pub fn measured_rows(&self, task: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.weight(r, task) > 0.0).collect()
    }

    /// Number of measured entries per task.
    pub fn task_counts(&self) -> Vec<usize> {
        (0..self.n_tasks()).map(|t| self.measured_rows(t).len()).collect()
    }

    /// Single-task matrix with only the rows measured for `task`.
    pub fn single_task(&self, task: usize) -> MultitaskMatrix {
        let rows = self.measured_rows(task);
        MultitaskMatrix {
            tasks: vec![self.tasks[task].clone()],
            compound_ids: rows.iter().map(|&r| self.compound_ids[r].clone()).collect(),
            features: rows.iter().map(|&r| self.features[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.label(r, task)).collect(),
            weights: rows.iter().map(|&r| self.weight(r, task)).collect(),
        }
    }
}

/// Assemble the dense matrix for one subset of a split.
///
/// Training subsets carry class weights (ratio from training rows, or from
/// the full task under random cross-validation); validation and test
/// subsets carry unit weights on measured entries. Tasks dropped by the
/// assignment get no column.
pub fn assemble_dense(
    collection: &Collection,
    assignment: &SplitAssignment,
    subset: Subset,
) -> Result<MultitaskMatrix, DataError> {
    let source = match assignment.regime {
        Regime::RandomKfold => RatioSource::FullDataset,
        _ => RatioSource::SplitLocal,
    };
    let mut columns = Vec::new();
    for ta in assignment.tasks.iter().filter(|t| !t.dropped) {
        let task = collection
            .task(&ta.task)
            .ok_or_else(|| DataError::AssignmentMismatch(ta.task.clone()))?;
        if ta.buckets.len() != task.len() {
            return Err(DataError::AssignmentMismatch(ta.task.clone()));
        }
        let weights = if subset == Subset::Train {
            let rows: Vec<usize> = ta.rows(Bucket::Train);
            Some(ratio_for(task, &rows, source)?)
        } else {
            None
        };
        columns.push((task, ta, weights));
    }

    let n_tasks = columns.len();
    let mut row_of: HashMap<&str, usize> = HashMap::new();
    let mut compound_ids = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    let want = subset.bucket();
    for (t, (task, ta, cw)) in columns.iter().enumerate() {
        for (r, rec) in task.records.iter().enumerate() {
            if ta.buckets[r] != want {
                continue;
            }
            let row = *row_of.entry(rec.compound_id.as_str()).or_insert_with(|| {
                compound_ids.push(rec.compound_id.clone());
                features.push(rec.fingerprint.clone());
                labels.extend(std::iter::repeat_n(0u8, n_tasks));
                weights.extend(std::iter::repeat_n(0.0f64, n_tasks));
                compound_ids.len() - 1
            });
            labels[row * n_tasks + t] = rec.label as u8;
            weights[row * n_tasks + t] = cw.map_or(1.0, |w| w.of(rec.label));
        }
    }
    Ok(MultitaskMatrix::new(
        columns.iter().map(|(task, _, _)| task.name.clone()).collect(),
        compound_ids,
        features,
        labels,
        weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;
    use chrono::NaiveDate;

    fn task(name: &str, labels: &[u8]) -> TaskDataset {
        let fp = Fingerprint::new(64).unwrap();
        TaskDataset {
            name: name.into(),
            records: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Record {
                    compound_id: format!("{name}{i}"),
                    smiles: "C".into(),
                    fingerprint: fp.clone(),
                    label: if l == 1 { Label::Active } else { Label::Inactive },
                    date: NaiveDate::from_ymd_opt(2014, 1, 1).unwrap(),
                })
                .collect(),
        }
    }

    #[test]
    fn minority_gets_ratio_weight() {
        let mut labels = vec![1u8; 9];
        labels.push(0);
        let t = task("t", &labels);
        let rows: Vec<usize> = (0..10).collect();
        let w = class_weights(&t, &rows, RatioSource::SplitLocal).unwrap();
        assert_eq!(w[9], 9.0);
        assert!(w[..9].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn balanced_classes_get_unit_weights() {
        let t = task("t", &[1, 0, 1, 0]);
        let w = class_weights(&t, &[0, 1, 2, 3], RatioSource::SplitLocal).unwrap();
        assert_eq!(w, vec![1.0; 4]);
    }

    #[test]
    fn dataset_a_ratio() {
        let w = ClassWeights::from_counts("A", 20247, 9652).unwrap();
        assert_eq!(w.active, 1.0);
        assert!((w.inactive - 2.0977).abs() < 1e-4);
        assert_eq!(w.inactive, 20247.0 / 9652.0);
    }

    #[test]
    fn full_dataset_ratio_ignores_split() {
        // full task 2:2, training rows 2 actives / 1 inactive
        let t = task("t", &[1, 1, 0, 0]);
        let w = class_weights(&t, &[0, 1, 2], RatioSource::FullDataset).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
        let w = class_weights(&t, &[0, 1, 2], RatioSource::SplitLocal).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn single_class_training_is_an_error() {
        let t = task("t", &[1, 1, 0]);
        assert!(matches!(
            class_weights(&t, &[0, 1], RatioSource::SplitLocal),
            Err(DataError::SingleClassTraining { .. })
        ));
    }
}
