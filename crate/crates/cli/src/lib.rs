//! Orchestration for `mtbench`: experiment configs, run directories and
//! the stage, comparison, analysis and report commands.

pub mod analyze;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::Context;
