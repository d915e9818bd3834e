//! Synthetic assay collections with a shared latent activity signal and
//! temporal drift in chemical space.
//!
//! Molecules are built by filling the slots of scaffold templates with
//! decoration fragments, which keeps every generated SMILES parseable.
//! Scaffolds and decorations are ordered along a "series" axis; with a
//! positive drift, each date favors entries near its relative position in
//! the collection's date range, so later compounds come from a shifted
//! fingerprint distribution.
//!
//! Labels follow a logistic model on fingerprint bits. Task `i` uses
//! weights `rho_i * shared + sqrt(1 - rho_i^2) * own_i`; each compound has a
//! single uniform draw `u` shared by all tasks, and a record is active when
//! `u < sigmoid(sharpness * (score - threshold))`. Two tasks with `rho = 1`
//! therefore label shared compounds identically. Label noise then flips
//! each record independently.

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Collection, DataError, Label, Record, TaskDataset};
use crate::chem::{parse_smiles, Fingerprint, FingerprintParams};
use crate::rng::seeded;

const SCAFFOLDS: &[&str] = &[
    "c1cc{}ccc1{}",
    "C1CC{}CC{}C1",
    "n1cc{}cc{}c1",
    "c1cc{}sc1{}",
    "C1CCN{}CC1{}",
    "c1ccc2[nH]c{}c{}c2c1",
    "C{}C(=O)N{}c1ccc{}cc1",
    "c1cc{}oc1{}",
    "O=C(N{})c1ccc{}nc1",
    "C1CN{}CCN1{}",
    "c1ccc(cc1)C{}N{}C",
    "CC{}(C)OC(=O)N{}",
    "c1ccc2c(c1)CC{}N2{}",
    "c1cnc2cc{}ccc2n1",
    "C1CC1C{}=C{}C",
    "c1cc{}c2ncccc2c1{}",
];

const DECORATIONS: &[&str] = &[
    "C",
    "CC",
    "O",
    "N",
    "F",
    "Cl",
    "OC",
    "C(=O)O",
    "C#N",
    "C(F)(F)F",
    "CCO",
    "N(C)C",
    "Br",
    "C(=O)N",
    "OCC",
    "S(=O)(=O)C",
    "C1CC1",
    "NC(=O)C",
    "c1ccccc1",
    "C1CCOCC1",
    "c1ccncc1",
    "CC(C)C",
];

/// Probability that a template slot stays empty.
const EMPTY_SLOT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub name: String,
    pub size: usize,
    /// Correlation of the task's activity weights with the shared latent.
    pub rho: f64,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub tasks: Vec<SyntheticTask>,
    /// Probability of flipping each label.
    #[serde(default)]
    pub noise: f64,
    /// Strength of the temporal shift in scaffold/decoration choice; 0 disables it.
    #[serde(default)]
    pub drift: f64,
    /// Probability that a record reuses a compound already generated for
    /// another task (within this task's date window).
    #[serde(default)]
    pub shared_fraction: f64,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    #[serde(default = "default_active_fraction")]
    pub active_fraction: f64,
    #[serde(default)]
    pub fingerprint: FingerprintParams,
}

fn default_sharpness() -> f64 {
    6.0
}

fn default_active_fraction() -> f64 {
    0.5
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.tasks.is_empty() {
            return bad("no tasks".into());
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|o| o.name == t.name) {
                return bad(format!("duplicate task {}", t.name));
            }
            if t.size < 2 {
                return bad(format!("task {} needs at least 2 records", t.name));
            }
            if !(-1.0..=1.0).contains(&t.rho) {
                return bad(format!("task {}: rho {} outside [-1, 1]", t.name, t.rho));
            }
            if t.end < t.start {
                return bad(format!("task {}: end before start", t.name));
            }
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return bad(format!("noise {} outside [0, 0.5]", self.noise));
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return bad(format!("shared_fraction {} outside [0, 1]", self.shared_fraction));
        }
        if !(self.active_fraction > 0.0 && self.active_fraction < 1.0) {
            return bad(format!("active_fraction {} outside (0, 1)", self.active_fraction));
        }
        if !self.drift.is_finite() || self.drift < 0.0 || !self.sharpness.is_finite() || self.sharpness <= 0.0 {
            return bad("drift must be >= 0 and sharpness > 0".into());
        }
        Fingerprint::new(self.fingerprint.width).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        Ok(())
    }
}

struct Compound {
    id: String,
    smiles: String,
    fingerprint: Fingerprint,
    date: NaiveDate,
    u: f64,
}

/// Weighted choice along the series axis; `time` in [0, 1]. Entries near
/// position `time` are favored, so series rise and fall over time.
fn pick_series<R: Rng>(len: usize, time: f64, drift: f64, rng: &mut R) -> usize {
    let weights: Vec<f64> = (0..len)
        .map(|k| {
            let position = if len > 1 { k as f64 / (len - 1) as f64 } else { time };
            (-4.0 * drift * (position - time).powi(2)).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if x < *w {
            return k;
        }
        x -= w;
    }
    len - 1
}

fn sample_smiles<R: Rng>(time: f64, drift: f64, rng: &mut R) -> String {
    let scaffold = SCAFFOLDS[pick_series(SCAFFOLDS.len(), time, drift, rng)];
    let mut out = String::new();
    let mut parts = scaffold.split("{}").peekable();
    while let Some(part) = parts.next() {
        out.push_str(part);
        if parts.peek().is_some() && rng.random::<f64>() >= EMPTY_SLOT {
            let deco = DECORATIONS[pick_series(DECORATIONS.len(), time, drift, rng)];
            out.push('(');
            out.push_str(deco);
            out.push(')');
        }
    }
    out
}

fn normal_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn score(weights: &[f64], fp: &Fingerprint) -> f64 {
    let n = fp.count_ones().max(1) as f64;
    fp.ones().map(|b| weights[b]).sum::<f64>() / n.sqrt()
}

/// Generate a collection; identical `(spec, seed)` give identical output.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Collection, DataError> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let width = spec.fingerprint.width;
    let shared = normal_vec(width, &mut rng);
    let task_weights: Vec<Vec<f64>> = spec
        .tasks
        .iter()
        .map(|t| {
            let own = normal_vec(width, &mut rng);
            let c = (1.0 - t.rho * t.rho).max(0.0).sqrt();
            shared.iter().zip(&own).map(|(s, o)| t.rho * s + c * o).collect()
        })
        .collect();

    let global_start = spec.tasks.iter().map(|t| t.start).min().unwrap();
    let global_end = spec.tasks.iter().map(|t| t.end).max().unwrap();
    let span = (global_end - global_start).num_days().max(1) as f64;

    let mut pool: Vec<Compound> = Vec::new();
    let mut memberships: Vec<Vec<usize>> = Vec::with_capacity(spec.tasks.len());
    for task in &spec.tasks {
        let days = (task.end - task.start).num_days();
        let in_window: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, c)| c.date >= task.start && c.date <= task.end)
            .map(|(i, _)| i)
            .collect();
        let mut used = std::collections::HashSet::new();
        let mut members = Vec::with_capacity(task.size);
        while members.len() < task.size {
            if !in_window.is_empty() && rng.random::<f64>() < spec.shared_fraction {
                let pick = in_window[rng.random_range(0..in_window.len())];
                if used.insert(pick) {
                    members.push(pick);
                    continue;
                }
            }
            let date = task.start + Duration::days(rng.random_range(0..=days));
            let time = (date - global_start).num_days() as f64 / span;
            let smiles = sample_smiles(time, spec.drift, &mut rng);
            let mol = parse_smiles(&smiles).expect("templates produce valid SMILES");
            let fingerprint = spec
                .fingerprint
                .fingerprint(&mol)
                .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
            pool.push(Compound {
                id: format!("CMP{:07}", pool.len()),
                smiles,
                fingerprint,
                date,
                u: rng.random::<f64>(),
            });
            used.insert(pool.len() - 1);
            members.push(pool.len() - 1);
        }
        memberships.push(members);
    }

    let mut tasks = Vec::with_capacity(spec.tasks.len());
    for (t, task) in spec.tasks.iter().enumerate() {
        let w = &task_weights[t];
        // threshold from the whole pool so that tasks with equal weights agree
        let mut scores: Vec<f64> = pool.iter().map(|c| score(w, &c.fingerprint)).collect();
        scores.sort_by(f64::total_cmp);
        let q = ((1.0 - spec.active_fraction) * (scores.len() - 1) as f64).round() as usize;
        let threshold = scores[q];

        let records = memberships[t]
            .iter()
            .map(|&i| {
                let c = &pool[i];
                let z = spec.sharpness * (score(w, &c.fingerprint) - threshold);
                let p = 1.0 / (1.0 + (-z).exp());
                let mut active = c.u < p;
                if rng.random::<f64>() < spec.noise {
                    active = !active;
                }
                Record {
                    compound_id: c.id.clone(),
                    smiles: c.smiles.clone(),
                    fingerprint: c.fingerprint.clone(),
                    label: if active { Label::Active } else { Label::Inactive },
                    date: c.date,
                }
            })
            .collect();
        let ds = TaskDataset {
            name: task.name.clone(),
            records,
        };
        if ds.n_active() == 0 || ds.n_inactive() == 0 {
            return Err(DataError::EmptyTask {
                task: ds.name,
                reason: "generated labels contain a single class".into(),
            });
        }
        tasks.push(ds);
    }
    Collection::new(tasks)
}
