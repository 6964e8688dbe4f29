//! Storage and query primitives for continuous-time dynamic graphs.
//!
//! The crate is organised around four pieces that a continuous-learning
//! trainer touches on every iteration:
//!
//! - [`graph`]: a node table plus per-node, chronologically ordered lists of
//!   fixed-capacity edge blocks, with soft deletion and offloading.
//! - [`sampler`]: temporal k-hop neighborhood sampling over the block lists.
//! - [`features`]: host-side node/edge feature tables and node memory.
//! - [`cache`]: batch-vectorized LRU/LFU/FIFO feature caches.
//!
//! [`partition`] holds the identity-hash edge-cut partitioner used to spread
//! the graph over several machines.

pub mod cache;
pub mod error;
pub mod features;
pub mod graph;
pub mod partition;
#[cfg(any(test, feature = "reference"))]
pub mod reference;
pub mod sampler;

mod codec;

pub use error::{Error, Result};

/// Dense, non-negative node identifier.
pub type NodeId = u64;
/// Edge identifier. Newer edges always carry larger ids.
pub type EdgeId = u64;
/// Integer timestamp in caller-defined units.
pub type Timestamp = i64;
