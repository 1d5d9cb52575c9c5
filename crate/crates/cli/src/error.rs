use std::path::Path;

use ipsi::dataset::DatasetError;
use ipsi::estimators::EstimatorError;
use ipsi::inference::InferenceError;
use ipsi::learners::LearnerError;
use ipsi::simulation::SimulationError;
use serde::Serialize;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    /// One-line JSON record.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            exit_code: i32,
            message: String,
        }
        serde_json::to_string(&Record { error: self.kind(), exit_code: self.exit_code(), message: self.to_string() })
            .expect("plain record serializes")
    }

    pub fn io(context: &str, path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{context} {}: {err}", path.display()))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidK { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::Parse(_) | LearnerError::InvalidFolds { .. } => CliError::Usage(e.to_string()),
            LearnerError::EmptyTrainingSet | LearnerError::DimensionMismatch(_) => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Dataset(d) => d.into(),
            EstimatorError::Learner(l) => l.into(),
            EstimatorError::Intervention(_) => CliError::Usage(e.to_string()),
            EstimatorError::NoTestUnits(_) => CliError::Data(e.to_string()),
            EstimatorError::InvalidPrediction { .. } | EstimatorError::NonFinite { .. } => {
                CliError::Numeric(e.to_string())
            }
            EstimatorError::Csv(_) | EstimatorError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::InvalidB | InferenceError::InvalidAlpha(_) => CliError::Usage(e.to_string()),
            InferenceError::TooFewUnits(_) | InferenceError::Csv(_) | InferenceError::Io(_) => {
                CliError::Data(e.to_string())
            }
            InferenceError::ZeroVariance(_) | InferenceError::DimensionMismatch(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Estimator(e) => e.into(),
            SimulationError::Inference(e) => e.into(),
            SimulationError::Intervention(_)
            | SimulationError::UnknownDgp(_)
            | SimulationError::UnknownMode(_)
            | SimulationError::UnsupportedMode { .. }
            | SimulationError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            SimulationError::Records(_) | SimulationError::Csv(_) | SimulationError::Io(_) => {
                CliError::Data(e.to_string())
            }
            SimulationError::DimensionMismatch(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ipsi::intervention::InterventionError> for CliError {
    fn from(e: ipsi::intervention::InterventionError) -> Self {
        CliError::Usage(e.to_string())
    }
}
