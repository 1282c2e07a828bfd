use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A required column is absent from the CSV header.
    #[error("missing column `{0}`")]
    MissingColumn(String),

    /// A data row failed validation. `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("{kind} id {index} out of range (size {size})")]
    Index {
        kind: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("enumeration over {events} events exceeds the limit of {limit}")]
    Capacity { events: usize, limit: usize },

    #[error("value outside the open unit interval: {0}")]
    Domain(String),

    /// A record refers to a cell with no acceptability parameter.
    #[error("no acceptability parameter for cell {0}")]
    MissingCell(String),

    #[error("non-finite value in {0}")]
    Numerical(String),

    /// The training loss became NaN or infinite. The trajectory up to the
    /// failure is kept for diagnosis.
    #[error("fit diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trajectory: Vec<f64>,
    },

    #[error("model does not cover {0}")]
    Coverage(String),

    #[error("paired comparison: {0}")]
    Pairing(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("table has no records")]
    Empty,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
