use std::fmt;

use tgflow_core::partition::PartitionSpec;
use tgflow_core::NodeId;

use crate::error::{ClusterError, Result};

/// A worker slot: machine index and local rank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorkerId {
    pub machine: usize,
    pub rank: usize,
}

impl WorkerId {
    pub fn new(machine: usize, rank: usize) -> Self {
        Self { machine, rank }
    }
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}r{}", self.machine, self.rank)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClusterSpec {
    pub machines: usize,
    pub workers_per_machine: usize,
    pub partition: PartitionSpec,
}

impl ClusterSpec {
    pub fn new(machines: usize, workers_per_machine: usize) -> Result<Self> {
        if workers_per_machine == 0 {
            return Err(ClusterError::Core(tgflow_core::Error::Config(
                "workers_per_machine must be at least 1".into(),
            )));
        }
        Ok(Self {
            machines,
            workers_per_machine,
            partition: PartitionSpec::new(machines)?,
        })
    }

    pub fn workers(&self) -> impl Iterator<Item = WorkerId> + '_ {
        (0..self.machines).flat_map(move |m| (0..self.workers_per_machine).map(move |r| WorkerId::new(m, r)))
    }

    pub fn num_workers(&self) -> usize {
        self.machines * self.workers_per_machine
    }

    /// Dense index of `w` in `0..num_workers()`.
    pub fn index(&self, w: WorkerId) -> usize {
        w.machine * self.workers_per_machine + w.rank
    }

    pub fn owner(&self, v: NodeId) -> usize {
        self.partition.assign(v)
    }
}

/// Worker that serves `target` for a trainer at `origin`: the owner machine's
/// worker with the trainer's rank.
pub fn route(spec: &ClusterSpec, origin: WorkerId, target: NodeId) -> WorkerId {
    WorkerId::new(spec.owner(target), origin.rank)
}
