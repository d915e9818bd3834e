//! Task relatedness, multitask benefit against training-set size, and
//! covariate-shift similarity histograms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{tanimoto_counts, Fingerprint};
use crate::data::TaskDataset;
use crate::split::{Bucket, SplitAssignment, TaskAssignment};

pub const DEFAULT_TAU: f64 = 0.5;
pub const BIN_WIDTH: f64 = 0.05;
pub const N_BINS: usize = 20;

const CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no pair reaches the similarity threshold {tau} ({pairs} pairs compared)")]
    NoSimilarPairs { tau: f64, pairs: u64 },
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("at least 3 points needed, got {0}")]
    TooFewPoints(usize),
    #[error("all sizes are equal")]
    DegenerateX,
    #[error("invalid point ({0}, {1})")]
    InvalidPoint(f64, f64),
    #[error("task {task}: empty {subset} subset")]
    EmptySubset { task: String, subset: &'static str },
    #[error("task {0} missing from the assignment")]
    UnknownTask(String),
    #[error("assignment for {task} has {found} rows, dataset has {expected}")]
    LengthMismatch { task: String, expected: usize, found: usize },
    #[error("histograms of different tasks cannot be merged: {0} vs {1}")]
    MergeMismatch(String, String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessReport {
    /// Similar pairs with equal labels.
    pub s: u64,
    /// Similar pairs with different labels.
    pub d: u64,
    /// `max(S, D) / (S + D)`, absent when no pair is similar.
    pub r: Option<f64>,
    pub tau: f64,
    /// Pairs compared, `|α|·|β|`.
    pub pairs: u64,
}

impl RelatednessReport {
    fn new(s: u64, d: u64, tau: f64, pairs: u64) -> Self {
        let r = (s + d > 0).then(|| s.max(d) as f64 / (s + d) as f64);
        RelatednessReport { s, d, r, tau, pairs }
    }

    /// R, or [`AnalysisError::NoSimilarPairs`] when it is undefined.
    pub fn ratio(&self) -> Result<f64, AnalysisError> {
        self.r.ok_or(AnalysisError::NoSimilarPairs {
            tau: self.tau,
            pairs: self.pairs,
        })
    }
}

fn check_widths<'a>(mut fps: impl Iterator<Item = &'a Fingerprint>) -> Result<(), AnalysisError> {
    let Some(first) = fps.next() else { return Ok(()) };
    match fps.find(|f| f.width() != first.width()) {
        Some(f) => Err(AnalysisError::WidthMismatch(first.width(), f.width())),
        None => Ok(()),
    }
}

/// Label agreement among structurally similar pairs of two tasks.
///
/// Every `(a, b)` with `a ∈ α`, `b ∈ β` is considered, including `a = b`
/// when both arguments are the same task. A pair is similar when its
/// Tanimoto coefficient is at least `tau`. Since `T ≤ min(|a|,|b|) / max(|a|,|b|)`,
/// β is sorted by popcount and only the popcount window that can reach
/// `tau` is scanned for each `a`.
///
/// The report is returned even when no pair is similar; [`RelatednessReport::ratio`]
/// turns that case into an error.
pub fn relatedness(alpha: &TaskDataset, beta: &TaskDataset, tau: f64) -> Result<RelatednessReport, AnalysisError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(AnalysisError::InvalidTau(tau));
    }
    check_widths(alpha.records.iter().chain(&beta.records).map(|r| &r.fingerprint))?;
    let mut sorted: Vec<(u32, &Fingerprint, bool)> = beta
        .records
        .iter()
        .map(|r| (r.fingerprint.count_ones(), &r.fingerprint, r.label.is_active()))
        .collect();
    sorted.sort_by_key(|e| e.0);
    let counts: Vec<u32> = sorted.iter().map(|e| e.0).collect();

    let (s, d) = alpha
        .records
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (mut s, mut d) = (0u64, 0u64);
            for a in chunk {
                let pa = a.fingerprint.count_ones();
                if pa == 0 {
                    continue;
                }
                // Bound check pb/pa >= tau (pb <= pa) and pa/pb >= tau (pb > pa).
                let lo = counts.partition_point(|&pb| (pb as f64) / (pa as f64) < tau);
                let hi = counts.partition_point(|&pb| pb <= pa || (pa as f64) / (pb as f64) >= tau);
                let ya = a.label.is_active();
                for &(_, fb, yb) in &sorted[lo..hi] {
                    let (inter, union) = tanimoto_counts(&a.fingerprint, fb).expect("widths checked");
                    if f64::from(inter) / f64::from(union) >= tau {
                        if ya == yb {
                            s += 1;
                        } else {
                            d += 1;
                        }
                    }
                }
            }
            (s, d)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let pairs = alpha.len() as u64 * beta.len() as u64;
    Ok(RelatednessReport::new(s, d, tau, pairs))
}

pub const RELATEDNESS_HEADER: [&str; 7] = ["task_a", "task_b", "tau", "pairs", "s", "d", "r"];

pub fn write_relatedness<W: Write>(rows: &[(String, String, RelatednessReport)], writer: W) -> Result<(), AnalysisError> {
    let mut w = csv_writer(writer);
    w.write_record(RELATEDNESS_HEADER)?;
    for (a, b, rep) in rows {
        w.write_record([
            a.clone(),
            b.clone(),
            rep.tau.to_string(),
            rep.pairs.to_string(),
            rep.s.to_string(),
            rep.d.to_string(),
            rep.r.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares of ΔAUC on `log10(size)`.
pub fn size_benefit_regression(points: &[(f64, f64)]) -> Result<RegressionResult, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(x.is_finite() && *x > 0.0 && y.is_finite())) {
        return Err(AnalysisError::InvalidPoint(x, y));
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(AnalysisError::DegenerateX);
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, &(_, y)) in xs.iter().zip(points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let constant_y = points.iter().all(|p| p.1 == points[0].1);
    let slope = if constant_y { 0.0 } else { sxy / sxx };
    let intercept = if constant_y { points[0].1 } else { my - slope * mx };
    let r2 = if constant_y || syy == 0.0 {
        0.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r2,
        n: points.len(),
    })
}

pub fn write_regression<W: Write>(result: &RegressionResult, writer: W) -> Result<(), AnalysisError> {
    let mut w = csv_writer(writer);
    w.write_record(["slope", "intercept", "r2", "n"])?;
    w.write_record([
        result.slope.to_string(),
        result.intercept.to_string(),
        result.r2.to_string(),
        result.n.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftHistogram {
    pub task: String,
    /// Maximum similarity to the training set, one value per test compound.
    pub values: Vec<f64>,
    /// `N_BINS` counts; bin `i` covers `[i·0.05, (i+1)·0.05)`, the last bin
    /// also holds 1.0.
    pub counts: Vec<usize>,
}

impl ShiftHistogram {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn bin_center(i: usize) -> f64 {
        (2 * i + 1) as f64 / (2 * N_BINS) as f64
    }

    /// Pool another histogram of the same task, e.g. the next CV fold.
    pub fn merge(&mut self, other: &ShiftHistogram) -> Result<(), AnalysisError> {
        if other.task != self.task {
            return Err(AnalysisError::MergeMismatch(self.task.clone(), other.task.clone()));
        }
        self.values.extend_from_slice(&other.values);
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let mut w = csv_writer(writer);
        w.write_record(["bin_center", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([Self::bin_center(i).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Covariate shift of `task` under `assignment`, looked up by task name.
pub fn covariate_shift(task: &TaskDataset, assignment: &SplitAssignment) -> Result<ShiftHistogram, AnalysisError> {
    let ta = assignment
        .task(&task.name)
        .ok_or_else(|| AnalysisError::UnknownTask(task.name.clone()))?;
    shift_histogram(task, ta)
}

/// Per test compound, the maximum Tanimoto similarity to any training
/// compound of the same task. Validation compounds take no part.
///
/// Maxima are compared as exact fractions and binned with integer
/// arithmetic, so a similarity of exactly 0.15 lands in the bin starting
/// at 0.15.
pub fn shift_histogram(task: &TaskDataset, assignment: &TaskAssignment) -> Result<ShiftHistogram, AnalysisError> {
    if assignment.buckets.len() != task.len() {
        return Err(AnalysisError::LengthMismatch {
            task: task.name.clone(),
            expected: task.len(),
            found: assignment.buckets.len(),
        });
    }
    let empty = |subset| AnalysisError::EmptySubset {
        task: task.name.clone(),
        subset,
    };
    let train: Vec<&Fingerprint> = assignment
        .rows(Bucket::Train)
        .into_iter()
        .map(|i| &task.records[i].fingerprint)
        .collect();
    let test = assignment.rows(Bucket::Test);
    if train.is_empty() {
        return Err(empty("train"));
    }
    if test.is_empty() {
        return Err(empty("test"));
    }
    check_widths(task.records.iter().map(|r| &r.fingerprint))?;

    let best: Vec<(u32, u32)> = test
        .par_iter()
        .map(|&i| {
            let a = &task.records[i].fingerprint;
            let pa = a.count_ones();
            let mut best = (0u32, 1u32);
            for b in &train {
                let pb = b.count_ones();
                // T ≤ min/max; skip when that cannot beat the current best.
                let (lo, hi) = (pa.min(pb), pa.max(pb));
                if hi == 0 || u64::from(lo) * u64::from(best.1) <= u64::from(best.0) * u64::from(hi) {
                    continue;
                }
                let (inter, union) = tanimoto_counts(a, b).expect("widths checked");
                if u64::from(inter) * u64::from(best.1) > u64::from(best.0) * u64::from(union) {
                    best = (inter, union);
                    if inter == union {
                        break;
                    }
                }
            }
            best
        })
        .collect();

    let mut counts = vec![0; N_BINS];
    let values = best
        .iter()
        .map(|&(inter, union)| {
            let bin = ((N_BINS as u64 * u64::from(inter)) / u64::from(union)) as usize;
            counts[bin.min(N_BINS - 1)] += 1;
            f64::from(inter) / f64::from(union)
        })
        .collect();
    Ok(ShiftHistogram {
        task: task.name.clone(),
        values,
        counts,
    })
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}
