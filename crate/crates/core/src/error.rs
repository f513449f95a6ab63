use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: row {row}: malformed record: {message}")]
    MalformedRow {
        file: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{file}: row {row}: duplicate pair ({donor}, {recipient})")]
    DuplicatePair {
        file: PathBuf,
        row: u64,
        donor: String,
        recipient: String,
    },

    #[error("{file}: row {row}: non-positive standard error {value}")]
    NonPositiveStdErr { file: PathBuf, row: u64, value: f64 },

    #[error("{file}: row {row}: unknown node label {label:?}")]
    UnknownLabel {
        file: PathBuf,
        row: u64,
        label: String,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all {starts} optimizer starts diverged")]
    FitDiverged { starts: usize },

    #[error("singular information matrix")]
    SingularInformation,

    #[error("no comparable pairs")]
    NoComparablePairs,

    #[error("no pairs observed in both networks")]
    NoCommonPairs,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("could not draw folds with events in both halves after {0} attempts")]
    FoldsWithoutEvents(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
