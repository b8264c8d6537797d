use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every layer of the simulator.
#[derive(Debug, Error)]
pub enum MegError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter `{field}`: {constraint}")]
    InvalidParameter { field: String, constraint: String },

    #[error("invalid payload: {0}")]
    InvalidPayload(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("channel configuration error: {0}")]
    ChannelConfig(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("step {index} ({action} at {site}) failed: {source}")]
    StepFailed {
        index: usize,
        action: String,
        site: String,
        #[source]
        source: Box<MegError>,
    },

    #[error("selection index {index} out of range for {count} candidates")]
    SelectionOutOfRange { index: usize, count: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MegError {
    pub(crate) fn param(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        MegError::InvalidParameter {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        MegError::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MegError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MegError>;
