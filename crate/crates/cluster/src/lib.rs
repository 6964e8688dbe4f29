//! Simulated multi-machine cluster for distributed temporal sampling.
//!
//! Nodes are hash-partitioned over machines. Each machine runs
//! `workers_per_machine` ranked workers, and a trainer of rank `r` always
//! sends its remote requests to the rank-`r` worker of the owner machine.
//! Workers talk to trainers over in-process channels or loopback TCP using
//! the frame format in [`wire`].

mod cluster;
pub mod error;
pub mod spec;
pub mod transport;
pub mod wire;
mod worker;

pub use cluster::{distributed_sample_khop, Cluster, ClusterConfig};
pub use error::{ClusterError, Result};
pub use spec::{route, ClusterSpec, WorkerId};
pub use transport::{Transport, TransportKind};
pub use worker::{measure_cv, per_rank_cv, CvReport, MachineStore, WorkerTelemetry};
