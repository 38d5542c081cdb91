use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("cannot parse config: {0}")]
    Parse(String),

    #[error("rate grid must have at least two horizons spanning 1.5 decades (got {points}, spanning {decades:.3})")]
    InsufficientGrid { points: usize, decades: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("schema mismatch in {}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Core(#[from] icb_core::Error),
}

impl LabError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        LabError::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
