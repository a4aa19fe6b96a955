use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("dataset {name} not found; looked for {}", searched.join(", "))]
    DatasetNotFound { name: String, searched: Vec<String> },

    #[error("dataset has no vertices")]
    EmptyDataset,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NumericFailure { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no class has a labeled vertex; cannot build prototypes")]
    NoCoveredClasses,

    #[error("ground-truth labels required for {0}")]
    MissingLabels(&'static str),

    #[error("annotation session aborted")]
    SessionAborted,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }
}
