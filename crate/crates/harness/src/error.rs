use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("row {row}: {message}")]
    Ingest { row: u64, message: String },
    #[error("{0}")]
    Metric(String),
    #[error(transparent)]
    Core(#[from] tgflow_core::Error),
    #[error(transparent)]
    Cluster(#[from] tgflow_cluster::ClusterError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
