use std::path::{Path, PathBuf};

use jointsurv_core::Error as CoreError;
use serde::Serialize;

/// Exit status of a successful command.
pub const EXIT_OK: i32 = 0;
/// Exit status for user or input errors (bad config, malformed files).
pub const EXIT_INPUT: i32 = 2;
/// Exit status for numerical or convergence failures.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Input,
    Io,
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Attach a file path to a core validation error.
    pub fn in_file(path: &Path, err: CoreError) -> Self {
        match kind_of(&err) {
            ErrorKind::Numerical => Self::Core(err),
            _ => Self::format(path, err.to_string()),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Io { .. } => ErrorKind::Io,
            Self::Format { .. } | Self::Usage(_) => ErrorKind::Input,
            Self::Core(e) => kind_of(e),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Input | ErrorKind::Io => EXIT_INPUT,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            Self::Io { path, .. } | Self::Format { path, .. } => Some(path),
            _ => None,
        }
    }

    /// Machine-readable error document.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": crate::report::SCHEMA_VERSION,
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
                "path": self.path().map(|p| p.display().to_string()),
            }
        })
    }
}

fn kind_of(err: &CoreError) -> ErrorKind {
    use CoreError::*;
    match err {
        SingularHazard { .. }
        | NonFiniteHazard { .. }
        | NonConvergence(_)
        | SingularCovariance
        | InitializationFailed(_)
        | NonFinitePosterior { .. }
        | TooFewDraws { .. }
        | RootFinding => ErrorKind::Numerical,
        _ => ErrorKind::Input,
    }
}
