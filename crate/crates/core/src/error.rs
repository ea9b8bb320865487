use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the somnoflow library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("kernel width {kernel} exceeds input length {length}")]
    KernelTooWide { kernel: usize, length: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient in layer `{layer}`")]
    NonFiniteGradient { layer: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid data at row {row}: {reason}")]
    Row { row: usize, reason: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{0}")]
    Training(String),

    #[error("not a model file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u8, supported: u8 },

    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("model payload digest mismatch: header says {expected}, payload hashes to {actual}")]
    DigestMismatch { expected: String, actual: String },

    #[error("malformed model header: {0}")]
    Header(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by the content.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
