//! Labeled, dated assay tables and the dense multitask training format.

mod dense;
mod io;
mod synthetic;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{Fingerprint, SmilesError};

pub use dense::{assemble_dense, class_weights, MultitaskMatrix, RatioSource, Subset};
pub use io::{load_collection, load_task, write_task_csv, INPUT_HEADER};
pub use synthetic::{generate_synthetic, SyntheticSpec, SyntheticTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Inactive = 0,
    Active = 1,
}

impl Label {
    pub fn is_active(self) -> bool {
        self == Label::Active
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Active => "active",
            Label::Inactive => "inactive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub compound_id: String,
    pub smiles: String,
    pub fingerprint: Fingerprint,
    pub label: Label,
    pub date: NaiveDate,
}

/// One assay: a named list of labeled, dated records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDataset {
    pub name: String,
    pub records: Vec<Record>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.records.iter().filter(|r| r.label.is_active()).count()
    }

    pub fn n_inactive(&self) -> usize {
        self.len() - self.n_active()
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.records.iter().map(|r| r.label)
    }
}

/// An ordered set of tasks. Task order defines output-head order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collection {
    tasks: Vec<TaskDataset>,
    index: BTreeMap<String, Vec<Option<Label>>>,
}

impl Collection {
    pub fn new(tasks: Vec<TaskDataset>) -> Result<Self, DataError> {
        let mut index: BTreeMap<String, Vec<Option<Label>>> = BTreeMap::new();
        for (t, task) in tasks.iter().enumerate() {
            if tasks[..t].iter().any(|o| o.name == task.name) {
                return Err(DataError::DuplicateTask(task.name.clone()));
            }
            for r in &task.records {
                index
                    .entry(r.compound_id.clone())
                    .or_insert_with(|| vec![None; tasks.len()])[t] = Some(r.label);
            }
        }
        Ok(Collection { tasks, index })
    }

    pub fn tasks(&self) -> &[TaskDataset] {
        &self.tasks
    }

    pub fn task(&self, name: &str) -> Option<&TaskDataset> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    pub fn task_names(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.name.clone()).collect()
    }

    /// Per-task labels of a compound, in task order.
    pub fn labels_of(&self, compound_id: &str) -> Option<&[Option<Label>]> {
        self.index.get(compound_id).map(Vec::as_slice)
    }

    pub fn n_compounds(&self) -> usize {
        self.index.len()
    }

    /// The subcollection containing only `names`, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Collection, DataError> {
        let tasks = names
            .iter()
            .map(|n| {
                self.task(n)
                    .cloned()
                    .ok_or_else(|| DataError::UnknownTask(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Collection::new(tasks)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}:{line}: malformed row: {reason}", file.display())]
    MalformedRow {
        file: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{}:{line}: unparseable SMILES {smiles:?}: {source}", file.display())]
    UnparseableSmiles {
        file: PathBuf,
        line: u64,
        smiles: String,
        source: SmilesError,
    },
    #[error("task {task} is empty: {reason}")]
    EmptyTask { task: String, reason: String },
    #[error("duplicate task name {0}")]
    DuplicateTask(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task}: training rows contain a single class")]
    SingleClassTraining { task: String },
    #[error("assignment does not cover task {0}")]
    AssignmentMismatch(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
