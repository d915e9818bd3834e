use std::path::PathBuf;

use mtbench_core::analysis::AnalysisError;
use mtbench_core::baselines::BaselineError;
use mtbench_core::data::DataError;
use mtbench_core::eval::EvalError;
use mtbench_core::mtnn::MtnnError;
use mtbench_core::split::SplitError;
use mtbench_core::stats::StatsError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing artifact {}: run the {stage} stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::MissingArtifact { .. } => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io { .. } | CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MtnnError> for CliError {
    fn from(e: MtnnError) -> Self {
        match e {
            MtnnError::InvalidArchitecture(_) | MtnnError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFinite { .. } | EvalError::NonFiniteScore => CliError::Numeric(e.to_string()),
            EvalError::Network(inner) => inner.into(),
            EvalError::Baseline(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::InvalidAlpha(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InvalidTau(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
