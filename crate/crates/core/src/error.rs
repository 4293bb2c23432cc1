use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("no qualifying headlines in {path} (min relevance {min_relevance})")]
    NoQualifyingHeadlines { path: PathBuf, min_relevance: f64 },

    #[error("end of price history for {asset} after {after}")]
    EndOfPriceHistory { asset: String, after: NaiveDate },

    #[error("no test dates retained: no date has a half-hourly unique headline for every portfolio asset; more data is needed")]
    NoTestDates,

    #[error("missing price bars for: {}", format_missing(.0))]
    MissingPrices(Vec<(String, NaiveDate)>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

fn format_missing(missing: &[(String, NaiveDate)]) -> String {
    missing
        .iter()
        .map(|(asset, date)| format!("({asset}, {date})"))
        .collect::<Vec<_>>()
        .join(", ")
}
