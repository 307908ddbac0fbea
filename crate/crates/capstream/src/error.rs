use thiserror::Error;

/// Errors surfaced by the streaming pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("miscoverage level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("p-value must lie in (0, 1], got {0}")]
    InvalidPValue(f64),

    #[error("record at t={0} has no revealed label")]
    UnlabeledRecord(i64),

    #[error("record at t={t} is not newer than the latest holdout entry at t={tail}")]
    StaleRecord { t: i64, tail: i64 },

    #[error("symmetric threshold requires a nonempty score window at t={0}")]
    EmptyScoreWindow(i64),

    #[error("picker `{picker}` is incompatible with selector `{selector}`")]
    IncompatibleRule { picker: String, selector: String },

    #[error("custom score level set at q={0} is not an interval")]
    NonIntervalLevelSet(f64),

    #[error("replication metrics disagree on the evaluation grid")]
    MismatchedGrid,

    #[error("coverage flag requires a selected step (t={0})")]
    CoverageWithoutSelection(i64),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}:{row}: {message}")]
    Ingest {
        path: String,
        row: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn ingest(path: &str, row: u64, message: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.to_string(),
            row,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
