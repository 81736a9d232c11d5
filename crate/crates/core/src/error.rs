use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The bytes on disk do not follow the IDSL layout.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// The requested importance source needs a case field that is absent.
    #[error("importance source `{source_kind}` requires field `{field}`, which is absent")]
    MissingField {
        source_kind: &'static str,
        field: &'static str,
    },

    #[error("row {row} has near-zero norm ({norm:e})")]
    ZeroNorm { row: usize, norm: f64 },

    #[error("index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
