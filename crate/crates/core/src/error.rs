use std::path::PathBuf;

/// Errors raised by every fallible operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("label {label} out of range for {classes} classes (row {row})")]
    Label {
        row: usize,
        label: usize,
        classes: usize,
    },

    #[error("batch too small for train-mode batch norm: {0} rows, need at least 2")]
    BatchTooSmall(usize),

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("format error at line {line}: {detail}")]
    Format { line: u64, detail: String },

    #[error("parse error at line {line}, column {col}: cannot read {cell:?} as a number")]
    Parse { line: u64, col: usize, cell: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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
