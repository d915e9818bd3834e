//! Experiment stages: synth, featurize, split, train, eval, compare.
//!
//! Every stage reads what it needs from the run directory (or recomputes it
//! deterministically from the config) so stages can be re-run in isolation.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mtbench_core::baselines::Baseline;
use mtbench_core::data::{generate_synthetic, load_collection, write_task_csv, Collection, Subset};
use mtbench_core::eval::{
    evaluate, evaluate_kfold, train_family, EvalResult, NetworkArtifact, TrainedModels,
};
use mtbench_core::mtnn::{Architecture, CheckpointStore};
use mtbench_core::rng::derive_seed;
use mtbench_core::split::{
    kfold_split, leaky_split, non_leaky_split, read_assignment_csv, write_assignment_csv, Bucket, Regime,
    SplitAssignment,
};
use mtbench_core::stats::{compare_lenient, run_label, write_comparisons, ComparisonRow};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, ModelSpec};
use crate::error::CliError;
use crate::manifest::{sha256_hex, FileHash, Manifest, ModelEntry};

pub const DATA_DIR: &str = "data";
pub const FEATURES_DIR: &str = "features";
pub const SPLITS_DIR: &str = "splits";
pub const MODELS_DIR: &str = "models";
pub const EVAL_DIR: &str = "eval";
pub const UNITS_DIR: &str = "units";
pub const COMPARISONS_FILE: &str = "comparisons.csv";
pub const SPLIT_SUMMARY_FILE: &str = "summary.csv";
pub const LEAKS_FILE: &str = "leaks.csv";
const MODEL_INDEX: &str = "index.json";

/// Keep names safe as path components.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// One split of the data: the whole run for leaky splits, one focus task
/// for non-leaky splits, one fold for cross-validation.
#[derive(Debug, Clone)]
pub struct Unit {
    pub name: String,
    pub assignment: SplitAssignment,
    /// Tasks evaluated (and trained, for per-task models) in this unit.
    pub only: Option<Vec<String>>,
}

pub struct Context {
    pub config: ExperimentConfig,
    pub root: PathBuf,
    pub manifest: Manifest,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

impl Context {
    /// Open (or create) the run directory. A manifest written for the same
    /// config is kept so completed stages stay recorded.
    pub fn open(config: ExperimentConfig, root: PathBuf) -> Result<Context, CliError> {
        fs::create_dir_all(&root).map_err(CliError::io(&root))?;
        let mut manifest = match Manifest::load(&root)? {
            Some(m) if m.config == config => m,
            Some(_) => {
                warn!("{}: config changed, starting a new manifest", root.display());
                Manifest::new(&config)
            }
            None => Manifest::new(&config),
        };
        manifest.warnings = config.warnings();
        for w in &manifest.warnings {
            warn!("{w}");
        }
        manifest.models = config
            .models
            .iter()
            .map(|m| ModelEntry {
                name: m.name(),
                label: label_of(m),
                family: m.family.to_string(),
                architecture: m.network_arch().map(|a| a.to_string()),
            })
            .collect();
        manifest.save(&root)?;
        Ok(Context { config, root, manifest })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn dir(&self, rel: &str) -> Result<PathBuf, CliError> {
        let d = self.root.join(rel);
        fs::create_dir_all(&d).map_err(CliError::io(&d))?;
        Ok(d)
    }

    fn finish(&mut self, stage: &str) -> Result<(), CliError> {
        self.manifest.complete(stage);
        self.manifest.save(&self.root)?;
        info!("stage {stage} done");
        Ok(())
    }

    fn record(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest.record_output(&self.root, path)
    }

    /// Load or generate the task collection and check it against the input
    /// hashes recorded by an earlier stage.
    pub fn collection(&mut self) -> Result<Collection, CliError> {
        let (collection, inputs) = match &self.config.data {
            DataSource::Paths(paths) => {
                let c = load_collection(paths, self.config.fingerprint)?;
                let hashes = paths
                    .iter()
                    .map(|p| FileHash::of(p, p.display().to_string()))
                    .collect::<Result<Vec<_>, _>>()?;
                (c, hashes)
            }
            DataSource::Synthetic(spec) => {
                let c = generate_synthetic(spec, self.manifest.seeds.data)?;
                let mut hashes = Vec::new();
                for t in c.tasks() {
                    let mut buf = Vec::new();
                    write_task_csv(t, &mut buf)?;
                    hashes.push(FileHash {
                        path: format!("synthetic:{}.csv", t.name),
                        bytes: buf.len() as u64,
                        sha256: sha256_hex(&buf),
                    });
                }
                (c, hashes)
            }
        };
        if !self.manifest.inputs.is_empty() && self.manifest.inputs != inputs {
            return Err(CliError::Data("inputs differ from those recorded in the manifest".into()));
        }
        self.manifest.inputs = inputs;
        Ok(collection)
    }

    pub fn synth(&mut self, collection: &Collection) -> Result<(), CliError> {
        if !matches!(self.config.data, DataSource::Synthetic(_)) {
            return Err(CliError::Config("synth needs a synthetic data source".into()));
        }
        let dir = self.dir(DATA_DIR)?;
        for t in collection.tasks() {
            let path = dir.join(format!("{}.csv", sanitize(&t.name)));
            let file = File::create(&path).map_err(CliError::io(&path))?;
            write_task_csv(t, BufWriter::new(file))?;
            self.record(&path)?;
        }
        self.finish("synth")
    }

    /// Per-task fingerprint tables: `compound_id,bits,fingerprint` (hex).
    pub fn featurize(&mut self, collection: &Collection) -> Result<(), CliError> {
        let dir = self.dir(FEATURES_DIR)?;
        for t in collection.tasks() {
            let path = dir.join(format!("{}.csv", sanitize(&t.name)));
            let mut w = csv_writer(&path)?;
            w.write_record(["compound_id", "bits", "fingerprint"])?;
            for r in &t.records {
                w.write_record([
                    r.compound_id.clone(),
                    r.fingerprint.count_ones().to_string(),
                    r.fingerprint.to_hex(),
                ])?;
            }
            w.flush().map_err(CliError::io(&path))?;
            drop(w);
            self.record(&path)?;
        }
        self.finish("featurize")
    }

    pub fn unit_names(&self) -> Vec<String> {
        match self.config.regime {
            Regime::LeakyTemporal => vec!["all".into()],
            Regime::NonLeakyTemporal => self
                .config
                .focus_tasks
                .iter()
                .map(|f| format!("focus-{}", sanitize(f)))
                .collect(),
            Regime::RandomKfold => (0..self.config.k()).map(|i| format!("fold-{i}")).collect(),
        }
    }

    fn compute_units(&self, collection: &Collection) -> Result<Vec<Unit>, CliError> {
        let names = self.unit_names();
        let fractions = self.config.fractions;
        Ok(match self.config.regime {
            Regime::LeakyTemporal => vec![Unit {
                name: names[0].clone(),
                assignment: leaky_split(collection, fractions)?,
                only: None,
            }],
            Regime::NonLeakyTemporal => self
                .config
                .focus_tasks
                .iter()
                .zip(names)
                .map(|(focus, name)| {
                    Ok(Unit {
                        name,
                        assignment: non_leaky_split(collection, focus, fractions)?,
                        only: Some(vec![focus.clone()]),
                    })
                })
                .collect::<Result<_, CliError>>()?,
            Regime::RandomKfold => kfold_split(collection, self.config.k(), self.manifest.seeds.split)?
                .into_iter()
                .zip(names)
                .map(|(assignment, name)| Unit {
                    name,
                    assignment,
                    only: None,
                })
                .collect(),
        })
    }

    pub fn split(&mut self, collection: &Collection) -> Result<Vec<Unit>, CliError> {
        let units = self.compute_units(collection)?;
        let dir = self.dir(SPLITS_DIR)?;
        for u in &units {
            let path = dir.join(format!("{}.csv", u.name));
            let file = File::create(&path).map_err(CliError::io(&path))?;
            write_assignment_csv(collection, &u.assignment, BufWriter::new(file))?;
            self.record(&path)?;
        }

        let path = dir.join(SPLIT_SUMMARY_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["unit", "task", "train", "valid", "test", "dropped"])?;
        for u in &units {
            for t in &u.assignment.tasks {
                w.write_record([
                    u.name.clone(),
                    t.task.clone(),
                    t.count(Bucket::Train).to_string(),
                    t.count(Bucket::Valid).to_string(),
                    t.count(Bucket::Test).to_string(),
                    t.dropped.to_string(),
                ])?;
            }
        }
        w.flush().map_err(CliError::io(&path))?;
        drop(w);
        self.record(&path)?;

        let path = dir.join(LEAKS_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["unit", "source_task", "affected_task", "latest_train_date"])?;
        for u in &units {
            for l in &u.assignment.leaks {
                w.write_record([
                    u.name.clone(),
                    l.source_task.clone(),
                    l.affected_task.clone(),
                    l.latest_train_date.to_string(),
                ])?;
            }
        }
        w.flush().map_err(CliError::io(&path))?;
        drop(w);
        self.record(&path)?;

        self.manifest.units = units.iter().map(|u| u.name.clone()).collect();
        self.finish("split")?;
        Ok(units)
    }

    /// Units as written by the split stage.
    pub fn read_units(&self, collection: &Collection) -> Result<Vec<Unit>, CliError> {
        let names = self.unit_names();
        names
            .into_iter()
            .enumerate()
            .map(|(i, name)| {
                let path = self.path(SPLITS_DIR).join(format!("{name}.csv"));
                let file = File::open(&path).map_err(|_| CliError::MissingArtifact {
                    path: path.clone(),
                    stage: "split",
                })?;
                let fold = (self.config.regime == Regime::RandomKfold).then_some(i);
                let assignment = read_assignment_csv(collection, file, fold)?;
                let only = match self.config.regime {
                    Regime::NonLeakyTemporal => Some(vec![self.config.focus_tasks[i].clone()]),
                    _ => None,
                };
                Ok(Unit { name, assignment, only })
            })
            .collect()
    }

    fn model_dir(&self, model: &ModelSpec, unit: &Unit) -> PathBuf {
        self.path(MODELS_DIR).join(sanitize(&model.name())).join(&unit.name)
    }

    pub fn train(&mut self, collection: &Collection, units: &[Unit]) -> Result<(), CliError> {
        let base = self.config.train_config();
        // Baselines ignore the architecture but the trainer takes one.
        let placeholder = Architecture::new(vec![1])?;
        for model in self.config.models.clone() {
            for (i, unit) in units.iter().enumerate() {
                let mut train = base.clone();
                train.seed = derive_seed(self.manifest.seeds.train, i as u64);
                train.weighting = model.family.weighting();
                let mut baselines = self.config.baselines.clone();
                baselines.forest.seed = derive_seed(self.manifest.seeds.baselines, i as u64);
                let arch = model.network_arch().unwrap_or(&placeholder);
                info!("training {} on {}", model.name(), unit.name);
                let trained = train_family(
                    collection,
                    &unit.assignment,
                    model.family,
                    arch,
                    &train,
                    &baselines,
                    unit.only.as_deref(),
                )?;
                let dir = self.model_dir(&model, unit);
                save_trained(&dir, &trained)?;
            }
        }
        self.finish("train")
    }

    pub fn eval(&mut self, collection: &Collection, units: &[Unit]) -> Result<Vec<(String, EvalResult)>, CliError> {
        let eval_dir = self.dir(EVAL_DIR)?;
        let mut out = Vec::new();
        for model in self.config.models.clone() {
            let arch = model.network_arch();
            let trained = units
                .iter()
                .map(|u| {
                    let dir = self.model_dir(&model, u);
                    load_trained(&dir)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let result = match self.config.regime {
                Regime::LeakyTemporal => evaluate(collection, &units[0].assignment, model.family, arch, &trained[0], None)?,
                Regime::RandomKfold => {
                    let assignments: Vec<SplitAssignment> = units.iter().map(|u| u.assignment.clone()).collect();
                    evaluate_kfold(collection, &assignments, model.family, arch, &trained, None)?
                }
                Regime::NonLeakyTemporal => {
                    let mut merged = EvalResult {
                        model: model.family,
                        arch: arch.cloned(),
                        regime: Regime::NonLeakyTemporal,
                        subset: Subset::Test,
                        tasks: Vec::new(),
                    };
                    for (u, t) in units.iter().zip(&trained) {
                        let r = evaluate(collection, &u.assignment, model.family, arch, t, u.only.as_deref())?;
                        let dir = self.dir(&format!("{UNITS_DIR}/{}/{EVAL_DIR}", u.name))?;
                        let path = dir.join(format!("{}.csv", sanitize(&model.name())));
                        write_eval(&path, &r)?;
                        self.record(&path)?;
                        merged.tasks.extend(r.tasks);
                    }
                    merged
                }
            };
            let path = eval_dir.join(format!("{}.csv", sanitize(&model.name())));
            write_eval(&path, &result)?;
            self.record(&path)?;
            out.push((model.name(), result));
        }
        self.finish("eval")?;
        Ok(out)
    }

    pub fn read_eval(&self, name: &str) -> Result<EvalResult, CliError> {
        let path = self.path(EVAL_DIR).join(format!("{}.csv", sanitize(name)));
        read_eval(&path, "eval")
    }

    pub fn compare(&mut self) -> Result<Vec<ComparisonRow>, CliError> {
        let mut rows = Vec::new();
        for (a, b) in self.config.comparison_pairs() {
            let ra = self.read_eval(&a)?;
            let rb = self.read_eval(&b)?;
            rows.push(compare_lenient(&ra, &rb, self.config.alpha)?.row());
        }
        let path = self.path(COMPARISONS_FILE);
        let file = File::create(&path).map_err(CliError::io(&path))?;
        write_comparisons(&rows, BufWriter::new(file))?;
        self.record(&path)?;
        self.finish("compare")?;
        Ok(rows)
    }

    /// Every stage in order.
    pub fn run(&mut self) -> Result<Vec<ComparisonRow>, CliError> {
        let collection = self.collection()?;
        if matches!(self.config.data, DataSource::Synthetic(_)) {
            self.synth(&collection)?;
        }
        self.featurize(&collection)?;
        let units = self.split(&collection)?;
        self.train(&collection, &units)?;
        self.eval(&collection, &units)?;
        self.compare()
    }
}

fn label_of(model: &ModelSpec) -> String {
    let r = EvalResult {
        model: model.family,
        arch: model.network_arch().cloned(),
        regime: Regime::LeakyTemporal,
        subset: Subset::Test,
        tasks: Vec::new(),
    };
    run_label(&r)
}

pub fn write_eval(path: &Path, result: &EvalResult) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    result.write_csv(BufWriter::new(file))?;
    Ok(())
}

pub fn read_eval(path: &Path, stage: &'static str) -> Result<EvalResult, CliError> {
    let file = File::open(path).map_err(|_| CliError::MissingArtifact {
        path: path.to_path_buf(),
        stage,
    })?;
    Ok(EvalResult::read_csv(file)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelIndex {
    family: Kind,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    Networks,
    Baselines,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    dir: String,
    tasks: Vec<String>,
}

pub fn save_trained(dir: &Path, trained: &TrainedModels) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let index = match trained {
        TrainedModels::Networks(nets) => {
            let mut entries = Vec::new();
            for (i, net) in nets.iter().enumerate() {
                let sub = format!("net-{i}");
                net.store.save(&dir.join(&sub))?;
                entries.push(IndexEntry {
                    dir: sub,
                    tasks: net.tasks.clone(),
                });
            }
            ModelIndex {
                family: Kind::Networks,
                entries,
            }
        }
        TrainedModels::Baselines(models) => {
            let mut entries = Vec::new();
            for (i, (task, model)) in models.iter().enumerate() {
                let sub = format!("task-{i}");
                model.save(&dir.join(&sub))?;
                entries.push(IndexEntry {
                    dir: sub,
                    tasks: vec![task.clone()],
                });
            }
            ModelIndex {
                family: Kind::Baselines,
                entries,
            }
        }
    };
    let path = dir.join(MODEL_INDEX);
    let text = serde_json::to_string_pretty(&index).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(CliError::io(&path))
}

pub fn load_trained(dir: &Path) -> Result<TrainedModels, CliError> {
    let path = dir.join(MODEL_INDEX);
    let text = fs::read_to_string(&path).map_err(|_| CliError::MissingArtifact {
        path: path.clone(),
        stage: "train",
    })?;
    let index: ModelIndex =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(match index.family {
        Kind::Networks => TrainedModels::Networks(
            index
                .entries
                .into_iter()
                .map(|e| {
                    Ok(NetworkArtifact {
                        store: CheckpointStore::load(&dir.join(&e.dir))?,
                        tasks: e.tasks,
                    })
                })
                .collect::<Result<_, CliError>>()?,
        ),
        Kind::Baselines => TrainedModels::Baselines(
            index
                .entries
                .into_iter()
                .map(|e| {
                    let task = e.tasks.into_iter().next().ok_or_else(|| CliError::Data("empty index entry".into()))?;
                    Ok((task, Baseline::load(&dir.join(&e.dir))?))
                })
                .collect::<Result<_, CliError>>()?,
        ),
    })
}
