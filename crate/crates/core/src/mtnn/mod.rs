//! Single-task and multitask feed-forward networks.
//!
//! Each hidden layer is affine → batch norm → ReLU → dropout; every task
//! owns a two-class softmax head on top of the shared stack. Training uses
//! adagrad on uniformly sampled minibatches and snapshots the parameters at
//! a fixed interval. Parameters and activations use `f32` by default (any
//! [`Scalar`]); batch-norm statistics, the loss and bias/scale gradient
//! reductions are accumulated in `f64`.
//!
//! Loss aggregation: mean over the minibatch rows, sum over tasks, with the
//! task weight and the per-example class weight multiplied together.

mod checkpoint;
mod network;
mod params;
mod train;

use thiserror::Error;

pub use checkpoint::{decode, encode, Checkpoint, CheckpointStore, FORMAT_VERSION, MAGIC, MANIFEST_FILE};
pub use network::{
    active_bits, forward, loss, loss_and_gradient, predict, BatchStats, DropoutMasks, Forward, Gradient, Mode,
    Probabilities, BN_EPSILON,
};
pub use params::{init_model, Architecture, HeadSlots, LayerSlots, Layout, ModelParams, Scalar};
pub use train::{
    task_weights, task_weights_from_counts, train, train_from, Adagrad, TaskWeighting, TrainConfig, TrainError,
    ADAGRAD_EPSILON, ADAGRAD_INITIAL_ACCUMULATOR, BN_MOMENTUM, FULL_SCALE_MAX_STEPS,
};

#[derive(Debug, Error)]
pub enum MtnnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid architecture {0}")]
    InvalidArchitecture(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("task {0} has no training entries")]
    EmptyTask(String),
    #[error("checkpoint step {step} does not follow {last}")]
    NonIncreasingStep { last: usize, step: usize },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
