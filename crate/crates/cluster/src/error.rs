use std::io;

use thiserror::Error;

use crate::spec::WorkerId;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("request {request_id} failed on worker {worker}: {message}")]
    Remote {
        request_id: u64,
        worker: WorkerId,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("worker {0} is not running")]
    Unavailable(WorkerId),
    #[error(transparent)]
    Core(#[from] tgflow_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl ClusterError {
    /// Request id carried by a remote failure.
    pub fn request_id(&self) -> Option<u64> {
        match self {
            ClusterError::Remote { request_id, .. } => Some(*request_id),
            _ => None,
        }
    }
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;
