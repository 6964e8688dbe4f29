//! Workload harness: stream ingestion and generation, the continuous
//! retraining loop with its cache and sampling metrics, throughput
//! benchmarks and the block-sizing ablation.

pub mod ablation;
pub mod bench;
pub mod config;
pub mod continuous;
pub mod error;
pub mod generate;
pub mod ingest;
pub mod metrics;

pub use error::{HarnessError, Result};
