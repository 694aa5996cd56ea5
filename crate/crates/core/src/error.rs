use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("document `{id}` is degenerate (no in-vocabulary tokens)")]
    DegenerateDocument { id: String },

    #[error("transport problem is infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure in stage {stage}: {message}")]
    Numerical { stage: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the caller's data or configuration, as
    /// opposed to internal numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical { .. })
    }
}
