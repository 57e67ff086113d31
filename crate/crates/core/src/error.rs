use std::path::PathBuf;

/// Errors produced by the blur detection library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("value {value} at index {index} is outside [0, 1] and cannot be stored as 8-bit")]
    Range { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected:?} (rows, cols), got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status a front end should use for this error:
    /// 1 for usage problems, 2 for I/O and decoding, 3 for violated invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParam(_) | Error::Config { .. } => 1,
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::Range { .. } | Error::DimensionMismatch { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
