use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capacity policy applied whenever a node's tail block is full.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockSizing {
    /// `min(max(deg, 1), threshold)`.
    Adaptive { threshold: usize },
    /// Every block has the same capacity.
    Fixed { size: usize },
    /// One block per node per ingestion call, sized to the node's new edges.
    PerBatch,
    /// One edge per block, i.e. a linked adjacency list.
    AdjacencyList,
}

impl BlockSizing {
    pub fn adaptive(threshold: usize) -> Result<Self> {
        let s = BlockSizing::Adaptive { threshold };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BlockSizing::Adaptive { threshold: 0 } => {
                Err(Error::Config("adaptive threshold must be at least 1".into()))
            }
            BlockSizing::Fixed { size: 0 } => {
                Err(Error::Config("fixed block size must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Capacity of a new block for a node of `degree` live edges that still
    /// has `pending` edges of the current call to place.
    pub fn capacity(&self, degree: u64, pending: usize) -> usize {
        match *self {
            BlockSizing::Adaptive { threshold } => {
                (degree.max(1)).min(threshold as u64) as usize
            }
            BlockSizing::Fixed { size } => size,
            BlockSizing::PerBatch => pending.max(1),
            BlockSizing::AdjacencyList => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BlockSizing::Adaptive { .. } => "adaptive",
            BlockSizing::Fixed { .. } => "fixed",
            BlockSizing::PerBatch => "strawman",
            BlockSizing::AdjacencyList => "adjacency_list",
        }
    }
}
