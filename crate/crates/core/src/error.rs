use std::path::PathBuf;

/// Errors produced by every oodkit operation.
#[derive(Debug, thiserror::Error)]
pub enum OodError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed container: bad magic, unsupported version, truncated payload.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed file carrying invalid values (NaN/Inf, zero rows, ragged rows).
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    /// Operation undefined for the given input (e.g. cosine of a zero vector).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    /// The same sample appears on both sides of a fit/eval or split boundary.
    #[error("leakage: {0}")]
    Leakage(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    Training {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl OodError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OodError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(row: usize, message: impl Into<String>) -> Self {
        OodError::Data {
            row,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, OodError>;
