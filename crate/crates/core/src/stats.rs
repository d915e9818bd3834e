//! Paired model comparison: median ΔAUC, sign test with Wilson score
//! intervals, and percentile bootstrap intervals.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalResult;
use crate::rng::seeded;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("task sets differ: {0}")]
    TaskMismatch(String),
    #[error("task {0} has no AUC in one of the results")]
    UndefinedAuc(String),
    #[error("empty input")]
    EmptyInput,
    #[error("every difference is exactly zero")]
    AllZero,
    #[error("invalid counts k={k}, n={n}")]
    InvalidCounts { k: usize, n: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("comparison table: {0}")]
    Table(String),
}

/// Per-task `AUC(a) − AUC(b)`, in the task order of `a`.
pub fn paired_deltas(a: &EvalResult, b: &EvalResult) -> Result<Vec<(String, f64)>, StatsError> {
    if a.tasks.len() != b.tasks.len() {
        return Err(StatsError::TaskMismatch(format!(
            "{} tasks vs {} tasks",
            a.tasks.len(),
            b.tasks.len()
        )));
    }
    a.tasks
        .iter()
        .map(|ta| {
            let tb = b.task(&ta.task).ok_or_else(|| StatsError::TaskMismatch(ta.task.clone()))?;
            match (ta.auc, tb.auc) {
                (Some(x), Some(y)) => Ok((ta.task.clone(), x - y)),
                _ => Err(StatsError::UndefinedAuc(ta.task.clone())),
            }
        })
        .collect()
}

/// `(k, n)`: positive differences and non-zero differences.
pub fn sign_test(deltas: &[f64]) -> Result<(usize, usize), StatsError> {
    if deltas.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = deltas.iter().filter(|&&d| d != 0.0).count();
    if n == 0 {
        return Err(StatsError::AllZero);
    }
    Ok((deltas.iter().filter(|&&d| d > 0.0).count(), n))
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Standard normal quantile by Wichura's algorithm AS241 (PPND16), with a
/// relative accuracy of about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_854_561,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return match p {
            0.0 => f64::NEG_INFINITY,
            1.0 => f64::INFINITY,
            _ => f64::NAN,
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = (-(if q < 0.0 { p } else { 1.0 - p }).ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

/// Wilson score interval for `k` successes in `n` trials at level `1 − α`.
///
/// Computed for `min(k, n − k)` and mirrored for the other half, so
/// `(k, n)` and `(n − k, n)` are exact reflections about 0.5. Bounds are
/// clamped to `[0, 1]`.
pub fn wilson_interval(k: usize, n: usize, alpha: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 || k > n {
        return Err(StatsError::InvalidCounts { k, n });
    }
    check_alpha(alpha)?;
    if 2 * k > n {
        let (lo, hi) = wilson_interval(n - k, n, alpha)?;
        return Ok((1.0 - hi, 1.0 - lo));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // For k = 0 the lower bound is exactly zero; rounding would leave ~1e-17.
    let lo = if k == 0 { 0.0 } else { (center - half).clamp(0.0, 1.0) };
    Ok((lo, (center + half).clamp(0.0, 1.0)))
}

/// Linear interpolation between order statistics at `q·(len − 1)`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Running mean; exact for constant input.
fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (i, v) in values.enumerate() {
        m += (v - m) / (i + 1) as f64;
    }
    m
}

/// Percentile bootstrap interval for the mean. Each resample draws
/// `values.len()` indices uniformly with replacement; the bounds are the
/// `α/2` and `1 − α/2` percentiles (linear interpolation) of the resampled
/// means.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, alpha: f64, seed: u64) -> Result<(f64, f64), StatsError> {
    if values.is_empty() || resamples == 0 {
        return Err(StatsError::EmptyInput);
    }
    check_alpha(alpha)?;
    let mut rng = seeded(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| mean_of((0..n).map(|_| values[rng.random_range(0..n)])))
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((percentile(&means, alpha / 2.0), percentile(&means, 1.0 - alpha / 2.0)))
}

/// Display label of a result: model family plus architecture if any.
pub fn run_label(r: &EvalResult) -> String {
    match &r.arch {
        Some(a) => format!("{} {}", r.model, a),
        None => r.model.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub model_a: String,
    pub model_b: String,
    /// Per-task `AUC(a) − AUC(b)`.
    pub deltas: Vec<(String, f64)>,
    pub median: f64,
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    /// `None` when every difference is zero.
    pub interval: Option<(f64, f64)>,
}

impl ComparisonResult {
    /// `1` if the interval lies above 0.5 (a wins), `-1` if below, else `0`.
    pub fn direction(&self) -> i8 {
        match self.interval {
            Some((lo, _)) if lo > 0.5 => 1,
            Some((_, hi)) if hi < 0.5 => -1,
            _ => 0,
        }
    }

    pub fn significant(&self) -> bool {
        self.direction() != 0
    }

    pub fn row(&self) -> ComparisonRow {
        ComparisonRow {
            model_a: self.model_a.clone(),
            model_b: self.model_b.clone(),
            median_delta_auc: self.median,
            k: self.k,
            n: self.n,
            ci_lo: self.interval.map(|i| i.0),
            ci_hi: self.interval.map(|i| i.1),
            significant: self.significant(),
        }
    }
}

/// Median ΔAUC, sign test and Wilson interval of `a` against `b`.
/// Fails with [`StatsError::AllZero`] when no task differs.
pub fn compare(a: &EvalResult, b: &EvalResult, alpha: f64) -> Result<ComparisonResult, StatsError> {
    let deltas = paired_deltas(a, b)?;
    let values: Vec<f64> = deltas.iter().map(|d| d.1).collect();
    let (k, n) = sign_test(&values)?;
    let interval = wilson_interval(k, n, alpha)?;
    Ok(ComparisonResult {
        model_a: run_label(a),
        model_b: run_label(b),
        median: median(&values).expect("non-empty"),
        deltas,
        k,
        n,
        alpha,
        interval: Some(interval),
    })
}

/// Like [`compare`], but a comparison without any non-zero difference is
/// reported as indistinguishable (`n = 0`, no interval) instead of failing.
pub fn compare_lenient(a: &EvalResult, b: &EvalResult, alpha: f64) -> Result<ComparisonResult, StatsError> {
    match compare(a, b, alpha) {
        Err(StatsError::AllZero) => {
            check_alpha(alpha)?;
            let deltas = paired_deltas(a, b)?;
            Ok(ComparisonResult {
                model_a: run_label(a),
                model_b: run_label(b),
                median: 0.0,
                deltas,
                k: 0,
                n: 0,
                alpha,
                interval: None,
            })
        }
        other => other,
    }
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_a: String,
    pub model_b: String,
    pub median_delta_auc: f64,
    pub k: usize,
    pub n: usize,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub significant: bool,
}

pub const COMPARISON_HEADER: [&str; 8] = [
    "model_a",
    "model_b",
    "median_delta_auc",
    "k",
    "n",
    "ci_lo",
    "ci_hi",
    "significant",
];

pub fn write_comparisons<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<(), StatsError> {
    let table = |e: csv::Error| StatsError::Table(e.to_string());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(writer);
    w.write_record(COMPARISON_HEADER).map_err(table)?;
    for r in rows {
        w.serialize(r).map_err(table)?;
    }
    w.flush().map_err(|e| StatsError::Table(e.to_string()))
}

pub fn read_comparisons<R: Read>(reader: R) -> Result<Vec<ComparisonRow>, StatsError> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(|e| StatsError::Table(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != COMPARISON_HEADER {
        return Err(StatsError::Table(format!("unexpected header {header:?}")));
    }
    r.deserialize()
        .collect::<Result<Vec<ComparisonRow>, _>>()
        .map_err(|e| StatsError::Table(e.to_string()))
}
