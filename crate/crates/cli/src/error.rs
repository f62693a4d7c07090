use std::io::ErrorKind;
use std::path::Path;

use pose2traj::config::ConfigError;
use pose2traj::data::DataError;
use pose2traj::eval::EvalError;
use pose2traj::model::ModelError;
use pose2traj::training::TrainError;

/// Failure classes, one per process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Missing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Missing(_) => 4,
        }
    }

    /// Prefixes the message, keeping the class.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
            CliError::Missing(m) => CliError::Missing(format!("{what}: {m}")),
        }
    }

    /// Attaches a path to an I/O error, treating absent files as missing
    /// artifacts.
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == ErrorKind::NotFound {
            CliError::Missing(msg)
        } else {
            CliError::Input(msg)
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) if io.kind() == ErrorKind::NotFound => {
                CliError::Missing(io.to_string())
            }
            DataError::SingularFit(_) => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergedLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::Io(io) if io.kind() == ErrorKind::NotFound => {
                CliError::Missing(io.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFinite => CliError::Numeric(e.to_string()),
            EvalError::MissingCheckpoint { .. } | EvalError::MissingSeries(_) => {
                CliError::Missing(e.to_string())
            }
            EvalError::Train(t) => t.into(),
            EvalError::Data(d) => d.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}
