//! Edge-cut hash partitioning.
//!
//! A node and every edge stored in its block list live on partition
//! `hash(node) % P`. Undirected edges are split into two oriented half-edges,
//! one per endpoint, so each partition holds a directed replica that carries
//! the global edge ids.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Directedness, IngestOutcome, RejectReason, RejectedEdge, TemporalEdge};
use crate::{EdgeId, NodeId, Timestamp};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeHash {
    #[default]
    Identity,
}

impl NodeHash {
    pub fn apply(self, v: NodeId) -> u64 {
        match self {
            NodeHash::Identity => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub partitions: usize,
    pub hash: NodeHash,
}

impl PartitionSpec {
    pub fn new(partitions: usize) -> Result<Self> {
        if partitions == 0 {
            return Err(Error::Config("partition count must be at least 1".into()));
        }
        Ok(Self {
            partitions,
            hash: NodeHash::Identity,
        })
    }

    pub fn assign(&self, v: NodeId) -> usize {
        (self.hash.apply(v) % self.partitions as u64) as usize
    }
}

pub fn assign(spec: &PartitionSpec, v: NodeId) -> usize {
    spec.assign(v)
}

/// Oriented half-edges destined for one partition, with their global ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionBatch {
    pub edges: Vec<TemporalEdge>,
    pub edge_ids: Vec<EdgeId>,
}

impl PartitionBatch {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dispatch {
    pub parts: Vec<PartitionBatch>,
    /// What a single unpartitioned graph would have reported for the batch.
    pub outcome: IngestOutcome,
}

/// Stateless routing of a batch whose edges all carry ids `first_id..`.
///
/// No ordering or deletion checks are applied; see [`Dispatcher`] for that.
pub fn dispatch(
    spec: &PartitionSpec,
    directedness: Directedness,
    edges: &[TemporalEdge],
    first_id: EdgeId,
) -> Vec<PartitionBatch> {
    let mut parts = vec![PartitionBatch::default(); spec.partitions];
    for (i, e) in edges.iter().enumerate() {
        route_edge(spec, directedness, e, first_id + i as EdgeId, &mut parts);
    }
    parts
}

fn route_edge(
    spec: &PartitionSpec,
    directedness: Directedness,
    e: &TemporalEdge,
    id: EdgeId,
    parts: &mut [PartitionBatch],
) {
    let mut push = |src: NodeId, dst: NodeId| {
        let p = &mut parts[spec.assign(src)];
        p.edges.push(TemporalEdge::new(src, dst, e.timestamp));
        p.edge_ids.push(id);
    };
    push(e.src, e.dst);
    if directedness == Directedness::Undirected {
        push(e.dst, e.src);
    }
}

/// Streaming front end that owns global edge ids and applies the same
/// acceptance rules as [`crate::graph::DynamicGraph`], so that replicas never
/// disagree with an unpartitioned graph about which edges exist.
#[derive(Clone, Debug)]
pub struct Dispatcher {
    spec: PartitionSpec,
    directedness: Directedness,
    next_edge_id: EdgeId,
    known_nodes: u64,
    last_ts: HashMap<NodeId, Timestamp>,
    deleted: HashSet<NodeId>,
}

impl Dispatcher {
    pub fn new(spec: PartitionSpec, directedness: Directedness) -> Self {
        Self {
            spec,
            directedness,
            next_edge_id: 0,
            known_nodes: 0,
            last_ts: HashMap::new(),
            deleted: HashSet::new(),
        }
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    pub fn directedness(&self) -> Directedness {
        self.directedness
    }

    pub fn next_edge_id(&self) -> EdgeId {
        self.next_edge_id
    }

    pub fn num_nodes(&self) -> u64 {
        self.known_nodes
    }

    pub fn dispatch(&mut self, edges: &[TemporalEdge]) -> Dispatch {
        let mut parts = vec![PartitionBatch::default(); self.spec.partitions];
        let mut outcome = IngestOutcome::default();
        for (index, e) in edges.iter().enumerate() {
            let reject = |reason| RejectedEdge { index, reason };
            if let Some(node) = [e.src, e.dst].into_iter().find(|v| self.deleted.contains(v)) {
                outcome.rejected.push(reject(RejectReason::NodeDeleted { node }));
                continue;
            }
            let stored_at: &[NodeId] = match self.directedness {
                Directedness::Directed => &[e.src],
                Directedness::Undirected => &[e.src, e.dst],
            };
            let stale = stored_at.iter().find_map(|v| {
                let last = *self.last_ts.get(v)?;
                (e.timestamp < last).then_some((*v, last))
            });
            if let Some((node, last)) = stale {
                outcome.rejected.push(reject(RejectReason::OutOfOrder { node, last }));
                continue;
            }
            for v in stored_at {
                self.last_ts.insert(*v, e.timestamp);
            }
            self.known_nodes = self.known_nodes.max(e.src.max(e.dst) + 1);
            let id = self.next_edge_id;
            self.next_edge_id += 1;
            outcome.edge_ids.push(id);
            route_edge(&self.spec, self.directedness, e, id, &mut parts);
        }
        Dispatch { parts, outcome }
    }

    /// Records a node deletion. Returns false for unknown or deleted nodes,
    /// mirroring [`crate::graph::DynamicGraph::delete_node`].
    pub fn delete_node(&mut self, v: NodeId) -> bool {
        v < self.known_nodes && self.deleted.insert(v)
    }
}

/// Population coefficient of variation; 0 when the mean is 0 or `xs` is empty.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceStats {
    pub node_counts: Vec<u64>,
    /// Stored half-edges per partition.
    pub edge_counts: Vec<u64>,
    pub node_cv: f64,
    pub edge_cv: f64,
}

impl BalanceStats {
    pub fn from_counts(node_counts: Vec<u64>, edge_counts: Vec<u64>) -> Self {
        let cv = |c: &[u64]| coefficient_of_variation(&c.iter().map(|&x| x as f64).collect::<Vec<_>>());
        Self {
            node_cv: cv(&node_counts),
            edge_cv: cv(&edge_counts),
            node_counts,
            edge_counts,
        }
    }
}

/// Balance of the partitions an edge stream would produce. Nodes are counted
/// once, on their owning partition, if they appear as an endpoint.
pub fn balance_stats(spec: &PartitionSpec, directedness: Directedness, edges: &[TemporalEdge]) -> BalanceStats {
    let mut nodes = HashSet::new();
    let mut edge_counts = vec![0u64; spec.partitions];
    for e in edges {
        nodes.insert(e.src);
        nodes.insert(e.dst);
        edge_counts[spec.assign(e.src)] += 1;
        if directedness == Directedness::Undirected {
            edge_counts[spec.assign(e.dst)] += 1;
        }
    }
    let mut node_counts = vec![0u64; spec.partitions];
    for v in nodes {
        node_counts[spec.assign(v)] += 1;
    }
    BalanceStats::from_counts(node_counts, edge_counts)
}
