//! `analyze` and `report` commands.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mtbench_core::analysis::{
    relatedness, shift_histogram, size_benefit_regression, write_regression, write_relatedness, ShiftHistogram,
};
use mtbench_core::data::Collection;
use mtbench_core::split::{leaky_split, stratified_kfold};
use mtbench_core::stats::{paired_deltas, read_comparisons};

use crate::error::CliError;
use crate::pipeline::{sanitize, Context, COMPARISONS_FILE, SPLITS_DIR, SPLIT_SUMMARY_FILE};

pub const ANALYSIS_DIR: &str = "analysis";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Relatedness,
    SizeBenefit,
    CovariateShift,
}

impl FromStr for Analysis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relatedness" => Ok(Analysis::Relatedness),
            "size-benefit" => Ok(Analysis::SizeBenefit),
            "covariate-shift" => Ok(Analysis::CovariateShift),
            other => Err(CliError::Config(format!("unknown analysis {other:?}"))),
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn out_dir(ctx: &Context) -> Result<PathBuf, CliError> {
    let d = ctx.path(ANALYSIS_DIR);
    fs::create_dir_all(&d).map_err(CliError::io(&d))?;
    Ok(d)
}

/// R for every unordered task pair, including each task with itself.
pub fn run_relatedness(ctx: &mut Context, collection: &Collection, tau: f64) -> Result<PathBuf, CliError> {
    let tasks = collection.tasks();
    let mut rows = Vec::new();
    for (i, a) in tasks.iter().enumerate() {
        for b in &tasks[i..] {
            rows.push((a.name.clone(), b.name.clone(), relatedness(a, b, tau)?));
        }
    }
    let path = out_dir(ctx)?.join("relatedness.csv");
    let file = File::create(&path).map_err(CliError::io(&path))?;
    write_relatedness(&rows, BufWriter::new(file))?;
    ctx.manifest.record_output(&ctx.root, &path)?;
    ctx.manifest.save(&ctx.root)?;
    Ok(path)
}

/// Histograms of every task under a temporal split and under random
/// cross-validation (test folds pooled), plus a summary of the means.
pub fn run_covariate_shift(ctx: &mut Context, collection: &Collection) -> Result<Vec<PathBuf>, CliError> {
    let temporal = leaky_split(collection, ctx.config.fractions)?;
    let k = ctx.config.k();
    let dir = out_dir(ctx)?;
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for (t, task) in collection.tasks().iter().enumerate() {
        let ta = temporal
            .task(&task.name)
            .ok_or_else(|| CliError::Data(format!("task {} missing from split", task.name)))?;
        let temporal_h = shift_histogram(task, ta)?;
        let folds = stratified_kfold(task, k, mtbench_core::rng::derive_seed(ctx.manifest.seeds.split, t as u64))?;
        let mut random_h: Option<ShiftHistogram> = None;
        for f in 0..k {
            let h = shift_histogram(task, &folds.assignment(&task.name, f))?;
            match &mut random_h {
                Some(acc) => acc.merge(&h)?,
                None => random_h = Some(h),
            }
        }
        let random_h = random_h.expect("k >= 2");
        for (regime, h) in [("temporal", &temporal_h), ("random", &random_h)] {
            let path = dir.join(format!("shift-{regime}-{}.csv", sanitize(&task.name)));
            let file = File::create(&path).map_err(CliError::io(&path))?;
            h.write_csv(BufWriter::new(file))?;
            ctx.manifest.record_output(&ctx.root, &path)?;
            summary.push((task.name.clone(), regime, h.values.len(), h.mean()));
            written.push(path);
        }
    }
    let path = dir.join("shift-summary.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["task", "regime", "n_test", "mean_max_similarity"])?;
    for (task, regime, n, mean) in summary {
        w.write_record([task, regime.to_string(), n.to_string(), mean.to_string()])?;
    }
    w.flush().map_err(CliError::io(&path))?;
    drop(w);
    ctx.manifest.record_output(&ctx.root, &path)?;
    ctx.manifest.save(&ctx.root)?;
    written.push(path);
    Ok(written)
}

/// Mean training-set size of each task over the units that evaluate it.
fn train_sizes(ctx: &Context) -> Result<BTreeMap<String, f64>, CliError> {
    let path = ctx.path(SPLITS_DIR).join(SPLIT_SUMMARY_FILE);
    let file = File::open(&path).map_err(|_| CliError::MissingArtifact {
        path: path.clone(),
        stage: "split",
    })?;
    let focus: BTreeMap<String, String> = ctx
        .config
        .focus_tasks
        .iter()
        .map(|f| (format!("focus-{}", sanitize(f)), f.clone()))
        .collect();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(file);
    for rec in rdr.records() {
        let rec = rec?;
        let (unit, task, train) = (&rec[0], &rec[1], &rec[2]);
        if focus.get(unit).is_some_and(|f| f != task) {
            continue;
        }
        let n: f64 = train
            .parse()
            .map_err(|_| CliError::Data(format!("{}: bad train count {train:?}", path.display())))?;
        let e = sums.entry(task.to_string()).or_default();
        e.0 += n;
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(t, (s, c))| (t, s / c as f64)).collect())
}

/// Regression of `AUC(a) − AUC(b)` on log training size over tasks where
/// both AUCs are defined.
pub fn run_size_benefit(ctx: &mut Context, a: &str, b: &str) -> Result<Vec<PathBuf>, CliError> {
    let ra = ctx.read_eval(a)?;
    let rb = ctx.read_eval(b)?;
    let sizes = train_sizes(ctx)?;
    let common: Vec<_> = ra
        .tasks
        .iter()
        .filter(|t| t.auc.is_some() && rb.task(&t.task).is_some_and(|o| o.auc.is_some()))
        .map(|t| t.task.clone())
        .collect();
    let mut fa = ra.clone();
    let mut fb = rb.clone();
    fa.tasks.retain(|t| common.contains(&t.task));
    fb.tasks.retain(|t| common.contains(&t.task));
    let deltas = paired_deltas(&fa, &fb)?;
    let mut points = Vec::new();
    let dir = out_dir(ctx)?;
    let path = dir.join("size-benefit-points.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["task", "train_size", "delta_auc"])?;
    for (task, delta) in &deltas {
        let size = *sizes
            .get(task)
            .ok_or_else(|| CliError::Data(format!("no training size for task {task}")))?;
        points.push((size, *delta));
        w.write_record([task.clone(), size.to_string(), delta.to_string()])?;
    }
    w.flush().map_err(CliError::io(&path))?;
    drop(w);
    let result = size_benefit_regression(&points)?;
    let reg = dir.join("size-benefit.csv");
    let file = File::create(&reg).map_err(CliError::io(&reg))?;
    write_regression(&result, BufWriter::new(file))?;
    for p in [&path, &reg] {
        ctx.manifest.record_output(&ctx.root, p)?;
    }
    ctx.manifest.save(&ctx.root)?;
    Ok(vec![path, reg])
}

pub const REPORT_HEADER: [&str; 9] = [
    "source",
    "model_a",
    "model_b",
    "median_delta_auc",
    "k",
    "n",
    "ci_lo",
    "ci_hi",
    "significant",
];

/// Concatenate comparison tables (files, or run directories holding
/// `comparisons.csv`) into one summary, in argument order.
pub fn report(inputs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(out)?;
    w.write_record(REPORT_HEADER)?;
    for input in inputs {
        let file_path = if input.is_dir() { input.join(COMPARISONS_FILE) } else { input.clone() };
        let file = File::open(&file_path).map_err(|_| CliError::MissingArtifact {
            path: file_path.clone(),
            stage: "compare",
        })?;
        let source = input.display().to_string();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in read_comparisons(file)? {
            w.write_record([
                source.clone(),
                row.model_a,
                row.model_b,
                row.median_delta_auc.to_string(),
                row.k.to_string(),
                row.n.to_string(),
                opt(row.ci_lo),
                opt(row.ci_hi),
                row.significant.to_string(),
            ])?;
        }
    }
    w.flush().map_err(CliError::io(out))?;
    Ok(())
}
