//! Train/validation/test assignments: leaky and non-leaky temporal splits
//! and stratified random k-fold.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Collection, Label, TaskDataset};
use crate::rng::{derive_seed, seeded};

/// Default train/valid/test fractions.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// Achieved fractions further than this from the targets raise a warning.
pub const FRACTION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Train,
    Valid,
    Test,
    Excluded,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Train => "train",
            Bucket::Valid => "valid",
            Bucket::Test => "test",
            Bucket::Excluded => "excluded",
        }
    }
}

impl FromStr for Bucket {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Bucket::Train),
            "valid" => Ok(Bucket::Valid),
            "test" => Ok(Bucket::Test),
            "excluded" => Ok(Bucket::Excluded),
            other => Err(SplitError::Malformed(format!("unknown bucket {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    LeakyTemporal,
    NonLeakyTemporal,
    RandomKfold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::LeakyTemporal => "leaky-temporal",
            Regime::NonLeakyTemporal => "non-leaky-temporal",
            Regime::RandomKfold => "random-kfold",
        }
    }

    pub fn is_temporal(self) -> bool {
        self != Regime::RandomKfold
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "leaky-temporal" => Ok(Regime::LeakyTemporal),
            "non-leaky-temporal" => Ok(Regime::NonLeakyTemporal),
            "random-kfold" => Ok(Regime::RandomKfold),
            other => Err(SplitError::Malformed(format!("unknown regime {other:?}"))),
        }
    }
}

/// Records dated on or before `train` are training data, those on or before
/// `valid` are validation data, the rest are test data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub train: NaiveDate,
    pub valid: NaiveDate,
}

impl Cutoffs {
    pub fn bucket(&self, date: NaiveDate) -> Bucket {
        if date <= self.train {
            Bucket::Train
        } else if date <= self.valid {
            Bucket::Valid
        } else {
            Bucket::Test
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCutoffs {
    pub cutoffs: Cutoffs,
    pub counts: [usize; 3],
    /// Largest absolute gap between achieved and target fractions.
    pub deviation: f64,
}

impl TemporalCutoffs {
    pub fn deviates(&self) -> bool {
        self.deviation > FRACTION_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskAssignment {
    pub task: String,
    /// One bucket per record, in record order.
    pub buckets: Vec<Bucket>,
    pub cutoffs: Option<Cutoffs>,
    /// Task removed from this split (all records excluded).
    pub dropped: bool,
}

impl TaskAssignment {
    pub fn rows(&self, bucket: Bucket) -> Vec<usize> {
        self.buckets
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == bucket)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, bucket: Bucket) -> usize {
        self.buckets.iter().filter(|b| **b == bucket).count()
    }
}

/// Training data of `source_task` postdating the training cutoff of
/// `affected_task`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakFlag {
    pub source_task: String,
    pub affected_task: String,
    pub latest_train_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub regime: Regime,
    pub focus: Option<String>,
    pub fold: Option<usize>,
    pub tasks: Vec<TaskAssignment>,
    pub leaks: Vec<LeakFlag>,
}

impl SplitAssignment {
    pub fn task(&self, name: &str) -> Option<&TaskAssignment> {
        self.tasks.iter().find(|t| t.task == name)
    }

    pub fn retained_tasks(&self) -> impl Iterator<Item = &TaskAssignment> {
        self.tasks.iter().filter(|t| !t.dropped)
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("task {task}: {n} records, at least 10 required")]
    TooFewRecords { task: String, n: usize },
    #[error("task {task}: all records share one date")]
    DegenerateDates { task: String },
    #[error("focus task {0} not found")]
    FocusNotFound(String),
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("task {task}: {count} {class} records, fewer than k = {k}")]
    ClassTooSmall {
        task: String,
        class: &'static str,
        count: usize,
        k: usize,
    },
    #[error("malformed assignment: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fraction_argmin(cumulative: &[usize], range: std::ops::Range<usize>, target: f64) -> usize {
    let mut best = range.start;
    for j in range {
        if (cumulative[j] as f64 - target).abs() < (cumulative[best] as f64 - target).abs() {
            best = j;
        }
    }
    best
}

/// Choose date cutoffs whose record-count prefixes are closest to the
/// target fractions. Records sharing the cutoff date fall on the earlier
/// side; the test set is never empty.
pub fn temporal_cutoffs(task: &TaskDataset, fractions: (f64, f64, f64)) -> Result<TemporalCutoffs, SplitError> {
    let n = task.len();
    if n < 10 {
        return Err(SplitError::TooFewRecords {
            task: task.name.clone(),
            n,
        });
    }
    let mut dates: Vec<NaiveDate> = task.records.iter().map(|r| r.date).collect();
    dates.sort_unstable();
    let mut distinct: Vec<NaiveDate> = Vec::new();
    let mut cumulative: Vec<usize> = Vec::new();
    for (i, d) in dates.iter().enumerate() {
        if distinct.last() == Some(d) {
            *cumulative.last_mut().unwrap() = i + 1;
        } else {
            distinct.push(*d);
            cumulative.push(i + 1);
        }
    }
    if distinct.len() < 2 {
        return Err(SplitError::DegenerateDates {
            task: task.name.clone(),
        });
    }
    let last = distinct.len() - 1;
    let total = n as f64;
    let j_train = fraction_argmin(&cumulative, 0..last, fractions.0 * total);
    let j_valid = fraction_argmin(&cumulative, j_train..last, (fractions.0 + fractions.1) * total);
    let n_train = cumulative[j_train];
    let n_valid = cumulative[j_valid] - n_train;
    let n_test = n - cumulative[j_valid];
    let deviation = [
        (n_train as f64 / total - fractions.0).abs(),
        (n_valid as f64 / total - fractions.1).abs(),
        (n_test as f64 / total - fractions.2).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(TemporalCutoffs {
        cutoffs: Cutoffs {
            train: distinct[j_train],
            valid: distinct[j_valid],
        },
        counts: [n_train, n_valid, n_test],
        deviation,
    })
}

fn apply_cutoffs(task: &TaskDataset, cutoffs: Cutoffs) -> TaskAssignment {
    TaskAssignment {
        task: task.name.clone(),
        buckets: task.records.iter().map(|r| cutoffs.bucket(r.date)).collect(),
        cutoffs: Some(cutoffs),
        dropped: false,
    }
}

fn temporal_task(task: &TaskDataset, fractions: (f64, f64, f64)) -> Result<TaskAssignment, SplitError> {
    let tc = temporal_cutoffs(task, fractions)?;
    if tc.deviates() {
        warn!(
            "task {}: achieved split {:?} deviates from target fractions by {:.3}",
            task.name, tc.counts, tc.deviation
        );
    }
    Ok(apply_cutoffs(task, tc.cutoffs))
}

fn find_leaks(collection: &Collection, tasks: &[TaskAssignment]) -> Vec<LeakFlag> {
    let mut leaks = Vec::new();
    for affected in tasks.iter().filter(|t| !t.dropped) {
        let Some(cut) = affected.cutoffs else { continue };
        for source in tasks.iter().filter(|t| !t.dropped && t.task != affected.task) {
            let data = collection.task(&source.task).expect("assignment task in collection");
            let latest = source
                .rows(Bucket::Train)
                .into_iter()
                .map(|r| data.records[r].date)
                .max();
            if let Some(latest) = latest.filter(|d| *d > cut.train) {
                leaks.push(LeakFlag {
                    source_task: source.task.clone(),
                    affected_task: affected.task.clone(),
                    latest_train_date: latest,
                });
            }
        }
    }
    leaks
}

/// Temporal split with independent cutoffs per task.
pub fn leaky_split(collection: &Collection, fractions: (f64, f64, f64)) -> Result<SplitAssignment, SplitError> {
    let tasks = collection
        .tasks()
        .iter()
        .map(|t| temporal_task(t, fractions))
        .collect::<Result<Vec<_>, _>>()?;
    let leaks = find_leaks(collection, &tasks);
    Ok(SplitAssignment {
        regime: Regime::LeakyTemporal,
        focus: None,
        fold: None,
        tasks,
        leaks,
    })
}

/// Temporal split where the focus task's cutoffs partition every task.
///
/// The focus task gets exactly its leaky assignment. Side-task records after
/// the focus training cutoff land in valid/test and so never train. Side
/// tasks left without a two-class training set are dropped.
pub fn non_leaky_split(
    collection: &Collection,
    focus: &str,
    fractions: (f64, f64, f64),
) -> Result<SplitAssignment, SplitError> {
    let focus_task = collection
        .task(focus)
        .ok_or_else(|| SplitError::FocusNotFound(focus.to_string()))?;
    let focus_cutoffs = temporal_cutoffs(focus_task, fractions)?;
    let mut tasks = Vec::with_capacity(collection.tasks().len());
    for task in collection.tasks() {
        if task.name == focus {
            tasks.push(temporal_task(task, fractions)?);
            continue;
        }
        let mut ta = apply_cutoffs(task, focus_cutoffs.cutoffs);
        let train = ta.rows(Bucket::Train);
        let actives = train.iter().filter(|&&r| task.records[r].label == Label::Active).count();
        if actives == 0 || actives == train.len() {
            warn!(
                "non-leaky split for {focus}: dropping side task {} ({} training rows, {} active)",
                task.name,
                train.len(),
                actives
            );
            ta.buckets.iter_mut().for_each(|b| *b = Bucket::Excluded);
            ta.dropped = true;
        }
        tasks.push(ta);
    }
    let leaks = find_leaks(collection, &tasks);
    debug_assert!(leaks.is_empty());
    Ok(SplitAssignment {
        regime: Regime::NonLeakyTemporal,
        focus: Some(focus.to_string()),
        fold: None,
        tasks,
        leaks,
    })
}

/// Fold membership for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSet {
    pub k: usize,
    /// Fold index of each record.
    pub fold_of: Vec<usize>,
}

impl FoldSet {
    pub fn fold(&self, i: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&r| self.fold_of[r] == i).collect()
    }

    /// Assignment using fold `i` as test and the remaining folds as train.
    pub fn assignment(&self, task: &str, i: usize) -> TaskAssignment {
        TaskAssignment {
            task: task.to_string(),
            buckets: self
                .fold_of
                .iter()
                .map(|&f| if f == i { Bucket::Test } else { Bucket::Train })
                .collect(),
            cutoffs: None,
            dropped: false,
        }
    }
}

/// Shuffle each class independently and deal records round-robin into
/// `k` folds (inactives continue the deal where actives stopped).
pub fn stratified_kfold(task: &TaskDataset, k: usize, seed: u64) -> Result<FoldSet, SplitError> {
    if k < 2 {
        return Err(SplitError::InvalidK(k));
    }
    let mut actives: Vec<usize> = Vec::new();
    let mut inactives: Vec<usize> = Vec::new();
    for (i, r) in task.records.iter().enumerate() {
        match r.label {
            Label::Active => actives.push(i),
            Label::Inactive => inactives.push(i),
        }
    }
    for (class, members) in [("active", &actives), ("inactive", &inactives)] {
        if members.len() < k {
            return Err(SplitError::ClassTooSmall {
                task: task.name.clone(),
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = seeded(seed);
    actives.shuffle(&mut rng);
    inactives.shuffle(&mut rng);
    let mut fold_of = vec![0; task.len()];
    for (deal, &r) in actives.iter().chain(&inactives).enumerate() {
        fold_of[r] = deal % k;
    }
    Ok(FoldSet { k, fold_of })
}

/// One assignment per fold covering every task; task `t` is shuffled with
/// `derive_seed(seed, t)`.
pub fn kfold_split(collection: &Collection, k: usize, seed: u64) -> Result<Vec<SplitAssignment>, SplitError> {
    let folds = collection
        .tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| stratified_kfold(task, k, derive_seed(seed, t as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..k)
        .map(|i| SplitAssignment {
            regime: Regime::RandomKfold,
            focus: None,
            fold: Some(i),
            tasks: collection
                .tasks()
                .iter()
                .zip(&folds)
                .map(|(task, fs)| fs.assignment(&task.name, i))
                .collect(),
            leaks: Vec::new(),
        })
        .collect())
}

pub const ASSIGNMENT_HEADER: [&str; 7] = [
    "task",
    "compound_id",
    "bucket",
    "regime",
    "focus",
    "cutoff_train",
    "cutoff_valid",
];

pub fn write_assignment_csv<W: Write>(
    collection: &Collection,
    assignment: &SplitAssignment,
    writer: W,
) -> Result<(), SplitError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(ASSIGNMENT_HEADER)?;
    let focus = assignment.focus.as_deref().unwrap_or("");
    for ta in &assignment.tasks {
        let task = collection
            .task(&ta.task)
            .ok_or_else(|| SplitError::Malformed(format!("task {} not in collection", ta.task)))?;
        let (ct, cv) = ta.cutoffs.map_or((String::new(), String::new()), |c| {
            (c.train.to_string(), c.valid.to_string())
        });
        for (rec, bucket) in task.records.iter().zip(&ta.buckets) {
            w.write_record([
                ta.task.as_str(),
                rec.compound_id.as_str(),
                bucket.as_str(),
                assignment.regime.as_str(),
                focus,
                ct.as_str(),
                cv.as_str(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read an assignment written by [`write_assignment_csv`] back onto
/// `collection`.
pub fn read_assignment_csv<R: Read>(
    collection: &Collection,
    reader: R,
    fold: Option<usize>,
) -> Result<SplitAssignment, SplitError> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(ASSIGNMENT_HEADER) {
        return Err(SplitError::Malformed("unexpected header".into()));
    }
    let mut regime = None;
    let mut focus = None;
    let mut per_task: HashMap<String, (HashMap<String, Bucket>, Option<Cutoffs>)> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let r: Regime = row[3].parse()?;
        if *regime.get_or_insert(r) != r {
            return Err(SplitError::Malformed("mixed regimes".into()));
        }
        if !row[4].is_empty() {
            focus = Some(row[4].to_string());
        }
        let cutoffs = if row[5].is_empty() {
            None
        } else {
            let parse = |s: &str| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| SplitError::Malformed(e.to_string()))
            };
            Some(Cutoffs {
                train: parse(&row[5])?,
                valid: parse(&row[6])?,
            })
        };
        let entry = per_task.entry(row[0].to_string()).or_default();
        entry.0.insert(row[1].to_string(), row[2].parse()?);
        entry.1 = cutoffs;
    }
    let regime = regime.ok_or_else(|| SplitError::Malformed("empty assignment".into()))?;
    let mut tasks = Vec::new();
    for task in collection.tasks() {
        let (map, cutoffs) = per_task
            .remove(&task.name)
            .ok_or_else(|| SplitError::Malformed(format!("task {} missing", task.name)))?;
        let buckets = task
            .records
            .iter()
            .map(|r| {
                map.get(&r.compound_id)
                    .copied()
                    .ok_or_else(|| SplitError::Malformed(format!("{}/{} missing", task.name, r.compound_id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let dropped = buckets.iter().all(|b| *b == Bucket::Excluded);
        tasks.push(TaskAssignment {
            task: task.name.clone(),
            buckets,
            cutoffs,
            dropped,
        });
    }
    let leaks = if regime.is_temporal() {
        find_leaks(collection, &tasks)
    } else {
        Vec::new()
    };
    Ok(SplitAssignment {
        regime,
        focus,
        fold,
        tasks,
        leaks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::Fingerprint;
    use crate::data::Record;

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + chrono::Duration::days(n)
    }

    fn task(name: &str, dates: &[i64]) -> TaskDataset {
        TaskDataset {
            name: name.into(),
            records: dates
                .iter()
                .enumerate()
                .map(|(i, &d)| Record {
                    compound_id: format!("{name}-{i}"),
                    smiles: "C".into(),
                    fingerprint: Fingerprint::new(64).unwrap(),
                    label: if i % 2 == 0 { Label::Active } else { Label::Inactive },
                    date: day(d),
                })
                .collect(),
        }
    }

    #[test]
    fn ten_consecutive_dates() {
        let t = task("a", &(0..10).collect::<Vec<_>>());
        let tc = temporal_cutoffs(&t, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(tc.counts, [7, 1, 2]);
        assert!(!tc.deviates());
        assert_eq!(tc.cutoffs, Cutoffs { train: day(6), valid: day(7) });
    }

    #[test]
    fn tied_dates_fall_early() {
        let dates: Vec<i64> = (0..100).map(|i| i / 25).collect();
        let t = task("a", &dates);
        let tc = temporal_cutoffs(&t, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(tc.counts, [75, 0, 25]);
        assert!(tc.deviates());
    }

    #[test]
    fn degenerate_and_small_tasks() {
        assert!(matches!(
            temporal_cutoffs(&task("a", &[3; 12]), DEFAULT_FRACTIONS),
            Err(SplitError::DegenerateDates { .. })
        ));
        assert!(matches!(
            temporal_cutoffs(&task("a", &[1, 2, 3]), DEFAULT_FRACTIONS),
            Err(SplitError::TooFewRecords { n: 3, .. })
        ));
    }

    #[test]
    fn leaky_split_is_independent_per_task() {
        let a = task("a", &(0..10).collect::<Vec<_>>());
        let b = task("b", &(100..120).collect::<Vec<_>>());
        let c = Collection::new(vec![a.clone(), b]).unwrap();
        let s = leaky_split(&c, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(s.tasks[0].count(Bucket::Train), 7);
        assert_eq!(s.tasks[1].count(Bucket::Train), 14);
        assert_eq!(s.tasks[1].count(Bucket::Test), 4);
        // b trains on data after a's training cutoff
        assert!(s
            .leaks
            .iter()
            .any(|l| l.source_task == "b" && l.affected_task == "a"));

        let single = leaky_split(&Collection::new(vec![a.clone()]).unwrap(), DEFAULT_FRACTIONS).unwrap();
        let tc = temporal_cutoffs(&a, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(single.tasks[0], apply_cutoffs(&a, tc.cutoffs));
        assert!(single.leaks.is_empty());
    }

    #[test]
    fn non_leaky_uses_focus_cutoffs() {
        let a = task("a", &(0..10).collect::<Vec<_>>());
        let side = task("b", &[-5, -4, -3, -2, 0, 3, 6, 7, 8, 30, 400]);
        let early = task("c", &[-20, -19, -18, -17]);
        let c = Collection::new(vec![a, side, early]).unwrap();
        let s = non_leaky_split(&c, "a", DEFAULT_FRACTIONS).unwrap();
        let leaky = leaky_split(&Collection::new(vec![c.tasks()[0].clone()]).unwrap(), DEFAULT_FRACTIONS).unwrap();
        assert_eq!(s.tasks[0], leaky.tasks[0]);
        let b = &s.tasks[1];
        assert_eq!(b.count(Bucket::Train), 7);
        assert_eq!(b.buckets[7], Bucket::Valid);
        assert_eq!(b.buckets[10], Bucket::Test);
        assert!(s.tasks[2].buckets.iter().all(|&x| x == Bucket::Train));
        assert!(s.leaks.is_empty());
        assert!(matches!(
            non_leaky_split(&c, "zzz", DEFAULT_FRACTIONS),
            Err(SplitError::FocusNotFound(_))
        ));
    }

    #[test]
    fn side_task_without_training_rows_is_dropped() {
        let a = task("a", &(0..10).collect::<Vec<_>>());
        let late = task("late", &[50, 51, 52, 53]);
        let c = Collection::new(vec![a, late]).unwrap();
        let s = non_leaky_split(&c, "a", DEFAULT_FRACTIONS).unwrap();
        assert!(s.tasks[1].dropped);
        assert!(s.tasks[1].buckets.iter().all(|&b| b == Bucket::Excluded));
        assert_eq!(s.retained_tasks().count(), 1);
    }

    fn labeled(n_active: usize, n_inactive: usize) -> TaskDataset {
        let mut t = task("k", &vec![0; n_active + n_inactive]);
        for (i, r) in t.records.iter_mut().enumerate() {
            r.label = if i < n_active { Label::Active } else { Label::Inactive };
        }
        t
    }

    #[test]
    fn kfold_divisible_case() {
        let t = labeled(30, 70);
        let fs = stratified_kfold(&t, 5, 9).unwrap();
        for i in 0..5 {
            let fold = fs.fold(i);
            let act = fold.iter().filter(|&&r| t.records[r].label == Label::Active).count();
            assert_eq!((act, fold.len() - act), (6, 14));
        }
        assert_eq!(fs, stratified_kfold(&t, 5, 9).unwrap());
        assert_ne!(fs, stratified_kfold(&t, 5, 10).unwrap());
    }

    #[test]
    fn kfold_errors() {
        let t = labeled(30, 70);
        assert!(matches!(stratified_kfold(&t, 1, 0), Err(SplitError::InvalidK(1))));
        let t = labeled(3, 70);
        assert!(matches!(
            stratified_kfold(&t, 5, 0),
            Err(SplitError::ClassTooSmall { class: "active", count: 3, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let a = task("a", &(0..10).collect::<Vec<_>>());
        let b = task("b", &[-5, -4, -3, -2, 0, 3, 6, 7, 8, 30, 400]);
        let late = task("late", &[50, 51, 52, 53]);
        let c = Collection::new(vec![a, b, late]).unwrap();
        let s = non_leaky_split(&c, "a", DEFAULT_FRACTIONS).unwrap();
        let mut buf = Vec::new();
        write_assignment_csv(&c, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("task,compound_id,bucket,regime,focus,cutoff_train,cutoff_valid\n"));
        assert!(text.contains("a,a-0,train,non-leaky-temporal,a,2014-01-07,2014-01-08\n"));
        let back = read_assignment_csv(&c, buf.as_slice(), None).unwrap();
        assert_eq!(back, s);
    }
}
