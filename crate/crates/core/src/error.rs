use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the evaluation harness.
///
/// Variants are grouped by [`ErrorKind`] so that the command line front-end
/// can map them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unsupported camera model `{0}` (only PINHOLE and SIMPLE_PINHOLE are accepted)")]
    UnsupportedCameraModel(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("data integrity error: {0}")]
    Integrity(String),

    #[error("degenerate descriptor: {0}")]
    DegenerateDescriptor(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error category used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Integrity,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::UnsupportedCameraModel(_)
            | Error::InvalidPose(_)
            | Error::InvalidIntrinsics(_)
            | Error::Config(_)
            | Error::InsufficientData(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorKind::Config,
            Error::Format(_)
            | Error::Truncated(_)
            | Error::Integrity(_)
            | Error::DegenerateDescriptor(_) => ErrorKind::Integrity,
            Error::Numerical(_) => ErrorKind::Numerical,
        }
    }

    /// Process exit code: 2 configuration, 3 data integrity, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Integrity => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
