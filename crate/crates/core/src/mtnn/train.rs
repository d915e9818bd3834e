use log::debug;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::checkpoint::CheckpointStore;
use super::network::{active_bits, loss_and_gradient, BatchStats, DropoutMasks, Gradient};
use super::params::{init_model, Architecture, ModelParams, Scalar};
use super::MtnnError;
use crate::data::{Collection, MultitaskMatrix};
use crate::rng::{derive_seed, seeded};
use crate::split::{Bucket, SplitAssignment};

pub const ADAGRAD_INITIAL_ACCUMULATOR: f64 = 0.1;
pub const ADAGRAD_EPSILON: f64 = 1e-8;
pub const BN_MOMENTUM: f64 = 0.99;
pub const FULL_SCALE_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskWeighting {
    Uniform,
    InverseSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Probability of dropping a hidden unit.
    pub dropout: f64,
    pub max_steps: usize,
    pub checkpoint_interval: usize,
    pub seed: u64,
    pub weighting: TaskWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            dropout: 0.5,
            max_steps: 50_000,
            checkpoint_interval: 1_000,
            seed: 0,
            weighting: TaskWeighting::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MtnnError> {
        let bad = |what: &str| Err(MtnnError::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.max_steps == 0 || self.checkpoint_interval == 0 {
            return bad("max_steps and checkpoint_interval must be positive");
        }
        Ok(())
    }

    /// Steps at which checkpoints are written.
    pub fn schedule(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (1..=self.max_steps / self.checkpoint_interval)
            .map(|i| i * self.checkpoint_interval)
            .collect();
        if steps.last() != Some(&self.max_steps) {
            steps.push(self.max_steps);
        }
        steps
    }
}

/// Uniform: all 1. Inverse-size: `w_i ∝ 1/n_i`, scaled to mean 1.
pub fn task_weights_from_counts(
    names: &[String],
    counts: &[usize],
    mode: TaskWeighting,
) -> Result<Vec<f64>, MtnnError> {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(MtnnError::EmptyTask(names.get(i).cloned().unwrap_or_default()));
    }
    Ok(match mode {
        TaskWeighting::Uniform => vec![1.0; counts.len()],
        // w_i = k / Σ_j n_i/n_j, which keeps simple ratios exact.
        TaskWeighting::InverseSize => {
            let k = counts.len() as f64;
            counts
                .iter()
                .map(|&ci| k / counts.iter().map(|&cj| ci as f64 / cj as f64).sum::<f64>())
                .collect()
        }
    })
}

/// Task weights from the training-bucket sizes of the retained tasks.
pub fn task_weights(
    collection: &Collection,
    assignment: &SplitAssignment,
    mode: TaskWeighting,
) -> Result<Vec<f64>, MtnnError> {
    let retained: Vec<_> = assignment.retained_tasks().collect();
    for ta in &retained {
        if collection.task(&ta.task).is_none() {
            return Err(MtnnError::EmptyTask(ta.task.clone()));
        }
    }
    let names: Vec<String> = retained.iter().map(|t| t.task.clone()).collect();
    let counts: Vec<usize> = retained.iter().map(|t| t.count(Bucket::Train)).collect();
    task_weights_from_counts(&names, &counts, mode)
}

/// Adagrad: `G ← G + g²`, `θ ← θ − lr·g/√(G+ε)`, with `G` starting at 0.1.
#[derive(Debug, Clone)]
pub struct Adagrad<S: Scalar> {
    pub learning_rate: f64,
    accumulators: Vec<S>,
}

impl<S: Scalar> Adagrad<S> {
    pub fn new(n_values: usize, learning_rate: f64) -> Self {
        Adagrad {
            learning_rate,
            accumulators: vec![S::from_f64(ADAGRAD_INITIAL_ACCUMULATOR); n_values],
        }
    }

    pub fn accumulators(&self) -> &[S] {
        &self.accumulators
    }

    /// Current step size `lr/√(G+ε)` of parameter `i`.
    pub fn effective_step(&self, i: usize) -> f64 {
        self.learning_rate / (self.accumulators[i].as_f64() + ADAGRAD_EPSILON).sqrt()
    }

    fn update(&mut self, theta: &mut [S], range: std::ops::Range<usize>, grad: &[S]) {
        let lr = S::from_f64(self.learning_rate);
        let eps = S::from_f64(ADAGRAD_EPSILON);
        for ((p, acc), &g) in theta[range.clone()]
            .iter_mut()
            .zip(&mut self.accumulators[range.clone()])
            .zip(&grad[range])
        {
            *acc += g * g;
            *p -= lr * g / (*acc + eps).sqrt();
        }
    }

    /// Apply one step. First-layer rows absent from the gradient's touched
    /// set have an exactly zero gradient and are skipped.
    pub fn step(&mut self, params: &mut ModelParams<S>, grad: &Gradient<S>) {
        let out = grad.first_out();
        let theta = params.values_mut();
        for &i in grad.touched_rows() {
            let i = i as usize;
            self.update(theta, i * out..(i + 1) * out, &grad.values);
        }
        self.update(theta, grad.dense_from()..theta.len(), &grad.values);
    }
}

fn update_running<S: Scalar>(params: &mut ModelParams<S>, stats: &[BatchStats]) {
    let layers = params.layout().layers.clone();
    let running = params.running_mut();
    for (l, s) in layers.iter().zip(stats) {
        let (mean, var) = running[l.running..l.running + 2 * l.output].split_at_mut(l.output);
        for (r, m) in mean.iter_mut().zip(&s.mean) {
            *r = S::from_f64(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * m);
        }
        for (r, v) in var.iter_mut().zip(&s.var) {
            *r = S::from_f64(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * v);
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError<S: Scalar> {
    /// The store holds every checkpoint written before the failure.
    #[error("non-finite loss or gradient at step {step}")]
    NonFiniteLoss { step: usize, store: CheckpointStore<S> },
    #[error(transparent)]
    Invalid(#[from] MtnnError),
}

/// Train a network on every task of `matrix` (one task gives an STNN).
///
/// Parameters are initialized from `derive_seed(seed, 0)`; minibatch rows
/// (uniform, with replacement) and dropout masks come from
/// `derive_seed(seed, 1)`.
pub fn train<S: Scalar>(
    matrix: &MultitaskMatrix,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<CheckpointStore<S>, TrainError<S>> {
    config.validate()?;
    let counts = matrix.task_counts();
    let tw = task_weights_from_counts(&matrix.tasks, &counts, config.weighting)?;
    let params: ModelParams<S> = init_model(arch, matrix.width(), matrix.tasks.clone(), derive_seed(config.seed, 0))?;
    train_from(params, matrix, &tw, config)
}

/// Continue training from given parameters with explicit task weights.
pub fn train_from<S: Scalar>(
    mut params: ModelParams<S>,
    matrix: &MultitaskMatrix,
    task_weights: &[f64],
    config: &TrainConfig,
) -> Result<CheckpointStore<S>, TrainError<S>> {
    config.validate()?;
    if matrix.width() != params.input_width() || matrix.tasks != params.tasks {
        return Err(MtnnError::ShapeMismatch {
            expected: params.input_width(),
            found: matrix.width(),
        }
        .into());
    }
    let n_rows = matrix.n_rows();
    let n_tasks = matrix.n_tasks();
    if n_rows == 0 {
        return Err(MtnnError::EmptyTask(matrix.tasks.first().cloned().unwrap_or_default()).into());
    }
    let bits: Vec<Vec<u32>> = matrix.features.iter().map(active_bits).collect();
    let mut rng = seeded(derive_seed(config.seed, 1));
    let mut adagrad = Adagrad::<S>::new(params.layout().n_values, config.learning_rate);
    let mut grad = Gradient::new(&params);
    let mut store = CheckpointStore::new();
    let b = config.batch_size;
    let mut labels = vec![0u8; b * n_tasks];
    let mut weights = vec![0.0f64; b * n_tasks];
    let mut running_loss = 0.0;
    let mut since = 0usize;
    for step in 1..=config.max_steps {
        let picks: Vec<usize> = (0..b).map(|_| rng.random_range(0..n_rows)).collect();
        let rows: Vec<&[u32]> = picks.iter().map(|&r| bits[r].as_slice()).collect();
        for (k, &r) in picks.iter().enumerate() {
            let span = r * n_tasks..(r + 1) * n_tasks;
            labels[k * n_tasks..(k + 1) * n_tasks].copy_from_slice(&matrix.labels()[span.clone()]);
            weights[k * n_tasks..(k + 1) * n_tasks].copy_from_slice(&matrix.weights()[span]);
        }
        let masks = (config.dropout > 0.0).then(|| DropoutMasks::sample(&params, b, config.dropout, &mut rng));
        grad.clear();
        let (loss, stats) = loss_and_gradient(&params, &rows, &labels, &weights, task_weights, masks.as_ref(), &mut grad)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { step, store });
        }
        adagrad.step(&mut params, &grad);
        update_running(&mut params, &stats);
        running_loss += loss;
        since += 1;
        if step % config.checkpoint_interval == 0 || step == config.max_steps {
            if !params.is_finite() {
                return Err(TrainError::NonFiniteLoss { step, store });
            }
            let mean_loss = running_loss / since as f64;
            debug!("step {step}: mean minibatch loss {mean_loss:.5}");
            store
                .push(step, params.clone(), mean_loss)
                .expect("steps are increasing");
            running_loss = 0.0;
            since = 0;
        }
    }
    Ok(store)
}
