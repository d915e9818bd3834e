//! Desk-scale benchmarking of multitask neural networks for QSAR.
//!
//! The crate covers the whole experimental pipeline:
//!
//! * [`chem`]: a SMILES subset parser, circular (ECFP-style) fingerprints and
//!   Tanimoto similarity.
//! * [`data`]: assay table ingestion, class weighting, dense multitask matrix
//!   assembly and a synthetic collection generator.
//! * [`split`]: leaky and non-leaky temporal splits plus stratified k-fold.
//! * [`mtnn`]: single-task and multitask feed-forward networks trained with
//!   adagrad, batch normalization and dropout, with periodic checkpoints.
//! * [`baselines`]: logistic regression and random forest.
//! * [`eval`]: ROC AUC, checkpoint selection and the evaluation pipeline.
//! * [`stats`]: sign test with Wilson score intervals and bootstrap intervals.
//! * [`analysis`]: task relatedness, size/benefit regression and covariate
//!   shift histograms.

pub mod analysis;
pub mod baselines;
pub mod chem;
pub mod data;
pub mod eval;
pub mod mtnn;
pub mod rng;
pub mod split;
pub mod stats;

pub use analysis::{covariate_shift, relatedness, size_benefit_regression, RegressionResult, RelatednessReport, ShiftHistogram};
pub use baselines::{Baseline, ForestConfig, LogRegConfig};
pub use chem::{circular_fingerprint, parse_smiles, tanimoto, Fingerprint, FingerprintParams, Molecule};
pub use data::{generate_synthetic, Collection, Label, MultitaskMatrix, Record, SyntheticSpec, TaskDataset};
pub use eval::{roc_auc, EvalResult, ModelFamily, TaskEval};
pub use mtnn::{Architecture, CheckpointStore, TaskWeighting, TrainConfig};
pub use split::{Bucket, Regime, SplitAssignment, TaskAssignment};
pub use stats::{compare, wilson_interval, ComparisonResult};
