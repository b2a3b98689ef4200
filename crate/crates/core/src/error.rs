use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate vector (zero norm): {0}")]
    DegenerateVector(String),

    #[error("cannot aggregate an empty list")]
    EmptyAggregate,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("empty media: {0}")]
    EmptyMedia(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("not mated: probe {0} has no gallery mate")]
    NotMated(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_owned(),
            message: message.into(),
        }
    }

    /// Process exit code: 3 for data/validation errors, 4 for numeric or
    /// degenerate errors. Usage errors (2) are reported by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateVector(_)
            | Error::NonFinite(_)
            | Error::EmptyAggregate
            | Error::UndefinedMetric(_)
            | Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}
