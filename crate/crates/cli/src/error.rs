use std::path::Path;
use std::process::ExitCode;

use dopamine_core::estimators::EstimatorError;
use dopamine_core::evaluation::EvalError;
use dopamine_core::labeling::LabelingError;
use dopamine_core::testbed::TestbedError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    PropertyFailure(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::PropertyFailure(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        })
    }
}

impl From<LabelingError> for CliError {
    fn from(e: LabelingError) -> Self {
        match e {
            LabelingError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Labeling(l) => l.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TestbedError> for CliError {
    fn from(e: TestbedError) -> Self {
        match e {
            TestbedError::Io(_) | TestbedError::Csv(_) | TestbedError::Json(_) => CliError::Io(e.to_string()),
            TestbedError::Estimator(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) | EvalError::Csv(_) => CliError::Io(e.to_string()),
            EvalError::Estimator(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}
