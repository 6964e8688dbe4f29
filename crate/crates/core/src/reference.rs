//! Deliberately naive reference implementations used as test oracles.
//!
//! Nothing here shares code with the production paths: the caches are
//! textbook one-key-at-a-time structures and the edge log answers window
//! queries by scanning every edge ever inserted.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::graph::Directedness;
use crate::sampler::Candidate;
use crate::{EdgeId, NodeId, Timestamp};

/// One-key-at-a-time cache used to check the vectorized caches.
pub trait ScalarCache {
    /// Looks up `key`, updating recency/frequency; returns whether it hit.
    fn access(&mut self, key: u64) -> bool;
    /// Inserts an absent key; returns the evicted key, if any.
    fn insert(&mut self, key: u64) -> Option<u64>;
    fn contains(&self, key: u64) -> bool;
}

/// LRU ordered by a global access clock.
#[derive(Debug, Default)]
pub struct ScalarLru {
    capacity: usize,
    clock: u64,
    last_use: HashMap<u64, u64>,
}

impl ScalarLru {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            ..Default::default()
        }
    }
}

impl ScalarCache for ScalarLru {
    fn access(&mut self, key: u64) -> bool {
        self.clock += 1;
        match self.last_use.get_mut(&key) {
            Some(t) => {
                *t = self.clock;
                true
            }
            None => false,
        }
    }

    fn insert(&mut self, key: u64) -> Option<u64> {
        let mut evicted = None;
        if self.last_use.len() == self.capacity {
            let (&victim, _) = self.last_use.iter().min_by_key(|(_, &t)| t)?;
            self.last_use.remove(&victim);
            evicted = Some(victim);
        }
        self.last_use.insert(key, self.clock);
        evicted
    }

    fn contains(&self, key: u64) -> bool {
        self.last_use.contains_key(&key)
    }
}

/// LFU with explicit slot positions; ties evict the lowest slot.
#[derive(Debug, Default)]
pub struct ScalarLfu {
    slots: Vec<Option<(u64, u64)>>,
}

impl ScalarLfu {
    pub fn new(capacity: usize) -> Self {
        Self {
            slots: vec![None; capacity],
        }
    }
}

impl ScalarCache for ScalarLfu {
    fn access(&mut self, key: u64) -> bool {
        for (k, count) in self.slots.iter_mut().flatten() {
            if *k == key {
                *count += 1;
                return true;
            }
        }
        false
    }

    fn insert(&mut self, key: u64) -> Option<u64> {
        if let Some(free) = self.slots.iter().position(|s| s.is_none()) {
            self.slots[free] = Some((key, 1));
            return None;
        }
        let mut best: Option<(u64, usize)> = None;
        for (i, s) in self.slots.iter().enumerate() {
            let (_, c) = s.expect("full");
            if best.is_none_or(|(bc, _)| c < bc) {
                best = Some((c, i));
            }
        }
        let (_, i) = best?;
        let (old, _) = self.slots[i].replace((key, 1)).expect("full");
        Some(old)
    }

    fn contains(&self, key: u64) -> bool {
        self.slots.iter().flatten().any(|(k, _)| *k == key)
    }
}

/// FIFO queue.
#[derive(Debug, Default)]
pub struct ScalarFifo {
    capacity: usize,
    queue: VecDeque<u64>,
}

impl ScalarFifo {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            queue: VecDeque::new(),
        }
    }
}

impl ScalarCache for ScalarFifo {
    fn access(&mut self, key: u64) -> bool {
        self.queue.contains(&key)
    }

    fn insert(&mut self, key: u64) -> Option<u64> {
        let evicted = if self.queue.len() == self.capacity {
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(key);
        evicted
    }

    fn contains(&self, key: u64) -> bool {
        self.queue.contains(&key)
    }
}

/// Raw record of every mutation applied to a graph.
#[derive(Clone, Debug)]
pub struct EdgeLog {
    directedness: Directedness,
    edges: Vec<(NodeId, NodeId, Timestamp, EdgeId)>,
    deleted_edges: HashSet<EdgeId>,
    deleted_nodes: HashSet<NodeId>,
}

impl EdgeLog {
    pub fn new(directedness: Directedness) -> Self {
        Self {
            directedness,
            edges: Vec::new(),
            deleted_edges: HashSet::new(),
            deleted_nodes: HashSet::new(),
        }
    }

    pub fn insert(&mut self, src: NodeId, dst: NodeId, t: Timestamp, id: EdgeId) {
        self.edges.push((src, dst, t, id));
    }

    pub fn delete_edge(&mut self, id: EdgeId) {
        self.deleted_edges.insert(id);
    }

    pub fn delete_node(&mut self, v: NodeId) {
        self.deleted_nodes.insert(v);
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Valid edges of `v` inside `[t_start, t_end)`, sorted.
    pub fn candidates(&self, v: NodeId, t_start: Timestamp, t_end: Timestamp) -> Vec<Candidate> {
        if self.deleted_nodes.contains(&v) {
            return Vec::new();
        }
        let mut out = Vec::new();
        for &(s, d, t, id) in &self.edges {
            if t < t_start || t >= t_end || self.deleted_edges.contains(&id) {
                continue;
            }
            let mut visit = |nbr: NodeId| {
                if !self.deleted_nodes.contains(&nbr) {
                    out.push(Candidate {
                        neighbor: nbr,
                        edge_id: id,
                        timestamp: t,
                    });
                }
            };
            if s == v {
                visit(d);
            }
            if self.directedness == Directedness::Undirected && d == v {
                visit(s);
            }
        }
        out.sort();
        out
    }

    /// Node ids `0..=max seen id`.
    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        let max = self.edges.iter().map(|e| e.0.max(e.1)).max();
        0..max.map_or(0, |m| m + 1)
    }
}
