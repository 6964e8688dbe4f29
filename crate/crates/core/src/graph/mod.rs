//! Block-based dynamic graph storage.
//!
//! Every node owns a doubly-linked list of edge blocks ordered from oldest
//! (head) to newest (tail). A block holds a chronological run of edges and
//! records the smallest and largest timestamp it contains, which lets
//! temporal queries skip whole blocks. Deletions only flip validity flags;
//! offloading detaches whole blocks from the head of a list.

mod offload;
mod sizing;
mod tier;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::mem;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{EdgeId, NodeId, Timestamp};

pub use offload::{read_offload, write_offload, OffloadedBlock, OffloadedEdge, OFFLOAD_MAGIC, OFFLOAD_VERSION};
pub use sizing::BlockSizing;
pub use tier::{BlockHandle, BlockMeta, DataHandle, EdgeSegment, NodeEntry, EDGE_SLOT_BYTES};

use tier::{EdgeDataTier, MetadataTier};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directedness {
    Directed,
    Undirected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub timestamp: Timestamp,
}

impl TemporalEdge {
    pub fn new(src: NodeId, dst: NodeId, timestamp: Timestamp) -> Self {
        Self { src, dst, timestamp }
    }
}

/// Edges accumulated between two retraining rounds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionBatch {
    pub edges: Vec<TemporalEdge>,
}

impl InsertionBatch {
    pub fn new(edges: Vec<TemporalEdge>) -> Self {
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

impl FromIterator<TemporalEdge> for InsertionBatch {
    fn from_iter<I: IntoIterator<Item = TemporalEdge>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    /// The edge is older than the newest edge already stored at `node`.
    OutOfOrder { node: NodeId, last: Timestamp },
    NodeDeleted { node: NodeId },
    /// An explicit edge id went backwards or was used more than twice.
    BadEdgeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedEdge {
    /// Position in the submitted batch.
    pub index: usize,
    pub reason: RejectReason,
}

/// Result of one ingestion call. Rejected edges do not stop the rest of the
/// batch from being applied.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub edge_ids: Vec<EdgeId>,
    pub rejected: Vec<RejectedEdge>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StorageStats {
    pub avg_list_len: f64,
    pub max_list_len: usize,
    pub edge_data_bytes: u64,
    pub metadata_bytes: u64,
    pub wasted_slots: u64,
    /// Edge slots actually written, i.e. what a static array build would hold.
    pub written_slots: u64,
}

impl StorageStats {
    /// Edge-data bytes relative to a statically built array of the written slots.
    pub fn edge_data_overhead(&self) -> f64 {
        if self.written_slots == 0 {
            return 0.0;
        }
        self.wasted_slots as f64 / self.written_slots as f64
    }

    /// Whether unused slots stay below half of the written ones.
    pub fn within_waste_bound(&self) -> bool {
        2 * self.wasted_slots < self.written_slots || self.written_slots == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounters {
    pub metadata_reads: u64,
    pub edge_data_reads: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadSummary {
    pub blocks: usize,
    /// Edge slots written to the sink, including soft-deleted ones.
    pub edges: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SlotRef {
    block: BlockHandle,
    slot: u32,
}

/// Where the (at most two) stored copies of an edge live.
#[derive(Clone, Copy, Debug)]
struct EdgeCopies {
    first: Option<SlotRef>,
    second: Option<SlotRef>,
}

impl EdgeCopies {
    fn push(&mut self, r: SlotRef) -> bool {
        if self.first.is_none() {
            self.first = Some(r);
        } else if self.second.is_none() {
            self.second = Some(r);
        } else {
            return false;
        }
        true
    }

    fn iter(&self) -> impl Iterator<Item = SlotRef> {
        self.first.into_iter().chain(self.second)
    }

    fn remove_block(&mut self, block: BlockHandle) {
        if self.first.is_some_and(|r| r.block == block) {
            self.first = self.second.take();
        }
        if self.second.is_some_and(|r| r.block == block) {
            self.second = None;
        }
    }

    fn is_empty(&self) -> bool {
        self.first.is_none()
    }
}

struct PendingSlot {
    neighbor: NodeId,
    edge_id: EdgeId,
    timestamp: Timestamp,
}

/// In-memory continuous-time dynamic graph.
///
/// One writer mutates the graph through `&mut self`; any number of readers
/// may sample concurrently through `&self` between mutations.
#[derive(Debug)]
pub struct DynamicGraph {
    directedness: Directedness,
    sizing: BlockSizing,
    meta: MetadataTier,
    data: EdgeDataTier,
    copies: HashMap<EdgeId, EdgeCopies>,
    next_edge_id: EdgeId,
    live_edges: u64,
    inserted_edges: u64,
}

impl DynamicGraph {
    /// Graph with adaptive block sizing and threshold `tau`.
    pub fn new(directedness: Directedness, tau: usize) -> Result<Self> {
        Self::with_sizing(directedness, BlockSizing::adaptive(tau)?)
    }

    pub fn with_sizing(directedness: Directedness, sizing: BlockSizing) -> Result<Self> {
        sizing.validate()?;
        Ok(Self {
            directedness,
            sizing,
            meta: MetadataTier::default(),
            data: EdgeDataTier::default(),
            copies: HashMap::new(),
            next_edge_id: 0,
            live_edges: 0,
            inserted_edges: 0,
        })
    }

    pub fn directedness(&self) -> Directedness {
        self.directedness
    }

    pub fn sizing(&self) -> BlockSizing {
        self.sizing
    }

    /// Size of the node table (max seen node id + 1).
    pub fn num_nodes(&self) -> usize {
        self.meta.nodes.len()
    }

    /// Live edges; an undirected edge counts once.
    pub fn num_edges(&self) -> u64 {
        self.live_edges
    }

    /// Edges accepted since creation, including deleted and offloaded ones.
    pub fn inserted_edges(&self) -> u64 {
        self.inserted_edges
    }

    pub fn next_edge_id(&self) -> EdgeId {
        self.next_edge_id
    }

    pub fn node(&self, v: NodeId) -> Option<&NodeEntry> {
        self.meta.nodes.get(v as usize)
    }

    pub fn is_valid_node(&self, v: NodeId) -> bool {
        self.node(v).is_some_and(|n| n.valid)
    }

    pub fn degree(&self, v: NodeId) -> Result<u64> {
        match self.node(v) {
            None => Err(Error::NodeNotFound(v)),
            Some(n) if !n.valid => Err(Error::NodeDeleted(v)),
            Some(n) => Ok(n.degree),
        }
    }

    /// Capacity the next block allocated for `v` would receive.
    pub fn new_block_capacity(&self, v: NodeId) -> Result<usize> {
        let n = self.node(v).ok_or(Error::NodeNotFound(v))?;
        Ok(self.sizing.capacity(n.degree, 1))
    }

    pub fn block(&self, h: BlockHandle) -> &BlockMeta {
        self.meta.block(h)
    }

    pub fn segment(&self, h: DataHandle) -> &EdgeSegment {
        self.data.segment(h)
    }

    /// Blocks of `v` from head (oldest) to tail (newest).
    pub fn blocks(&self, v: NodeId) -> impl Iterator<Item = (&BlockMeta, &EdgeSegment)> + '_ {
        let mut cur = self.node(v).and_then(|n| n.head_block);
        std::iter::from_fn(move || {
            let h = cur?;
            let b = self.meta.block(h);
            cur = b.next;
            Some((b, self.data.segment(b.data)))
        })
    }

    pub(crate) fn read_node(&self, v: NodeId) -> Option<&NodeEntry> {
        self.meta.read_node(v)
    }

    pub(crate) fn read_block(&self, h: BlockHandle) -> &BlockMeta {
        self.meta.read_block(h)
    }

    /// Edge arrays of `block`, counting `slots` edge reads.
    pub(crate) fn read_segment(&self, block: &BlockMeta, slots: usize) -> &EdgeSegment {
        self.data.count_reads(slots);
        self.data.segment(block.data)
    }

    pub fn access_counters(&self) -> AccessCounters {
        AccessCounters {
            metadata_reads: self.meta.reads(),
            edge_data_reads: self.data.reads(),
        }
    }

    pub fn reset_access_counters(&self) {
        self.meta.reset_reads();
        self.data.reset_reads();
    }

    /// Appends a batch, assigning fresh edge ids in batch order.
    pub fn add_edges(&mut self, batch: &InsertionBatch) -> IngestOutcome {
        self.ingest(&batch.edges, None)
    }

    /// Appends edges that already carry ids, as a partition replica does.
    ///
    /// Ids must be non-decreasing across calls. The same id may appear
    /// twice, for the two half-edges of an undirected edge whose endpoints
    /// land on the same partition.
    pub fn add_edges_with_ids(
        &mut self,
        edges: &[TemporalEdge],
        ids: &[EdgeId],
    ) -> Result<IngestOutcome> {
        if edges.len() != ids.len() {
            return Err(Error::Argument(format!(
                "{} edges but {} ids",
                edges.len(),
                ids.len()
            )));
        }
        Ok(self.ingest(edges, Some(ids)))
    }

    fn ingest(&mut self, edges: &[TemporalEdge], ids: Option<&[EdgeId]>) -> IngestOutcome {
        let mut out = IngestOutcome::default();
        let mut pending: BTreeMap<NodeId, Vec<PendingSlot>> = BTreeMap::new();
        let mut last_ts: HashMap<NodeId, Timestamp> = HashMap::new();
        let mut last_explicit: Option<EdgeId> = self.next_edge_id.checked_sub(1);
        let mut explicit_uses: HashMap<EdgeId, usize> = HashMap::new();

        for (index, e) in edges.iter().enumerate() {
            let endpoints: &[(NodeId, NodeId)] = match self.directedness {
                Directedness::Directed => &[(e.src, e.dst)],
                Directedness::Undirected => &[(e.src, e.dst), (e.dst, e.src)],
            };

            let reject = |reason| RejectedEdge { index, reason };
            if let Some(v) = [e.src, e.dst].into_iter().find(|&v| self.node(v).is_some_and(|n| !n.valid)) {
                out.rejected.push(reject(RejectReason::NodeDeleted { node: v }));
                continue;
            }
            let stale = endpoints.iter().find_map(|&(v, _)| {
                let last = last_ts
                    .get(&v)
                    .copied()
                    .or_else(|| self.tail_timestamp(v))?;
                (e.timestamp < last).then_some((v, last))
            });
            if let Some((node, last)) = stale {
                out.rejected.push(reject(RejectReason::OutOfOrder { node, last }));
                continue;
            }

            let edge_id = match ids {
                None => self.next_edge_id,
                Some(ids) => {
                    let id = ids[index];
                    let existing = self.copies.get(&id).map_or(0, |c| c.iter().count());
                    let uses = explicit_uses.entry(id).or_insert(existing);
                    let copies_needed = endpoints.len();
                    if last_explicit.is_some_and(|l| id < l) || *uses + copies_needed > 2 {
                        out.rejected.push(reject(RejectReason::BadEdgeId));
                        continue;
                    }
                    *uses += copies_needed;
                    last_explicit = Some(id);
                    id
                }
            };
            let fresh = !self.copies.contains_key(&edge_id)
                && out.edge_ids.last() != Some(&edge_id);
            self.next_edge_id = self.next_edge_id.max(edge_id + 1);
            if fresh {
                self.inserted_edges += 1;
                self.live_edges += 1;
            }
            out.edge_ids.push(edge_id);

            for &(v, nbr) in endpoints {
                last_ts.insert(v, e.timestamp);
                pending.entry(v).or_default().push(PendingSlot {
                    neighbor: nbr,
                    edge_id,
                    timestamp: e.timestamp,
                });
            }
            let max_id = e.src.max(e.dst) as usize;
            if self.meta.nodes.len() <= max_id {
                self.meta.nodes.resize_with(max_id + 1, NodeEntry::default);
            }
        }

        for (v, slots) in pending {
            self.append_run(v, slots);
        }
        out
    }

    fn tail_timestamp(&self, v: NodeId) -> Option<Timestamp> {
        let tail = self.node(v)?.tail_block?;
        Some(self.meta.block(tail).t_max)
    }

    fn append_run(&mut self, v: NodeId, slots: Vec<PendingSlot>) {
        let total = slots.len();
        let mut slots = slots.into_iter().peekable();
        let mut placed = 0usize;

        while slots.peek().is_some() {
            let entry = &self.meta.nodes[v as usize];
            let tail = match entry.tail_block {
                Some(t) if {
                    let b = self.meta.block(t);
                    b.size < b.capacity
                } =>
                {
                    t
                }
                _ => {
                    let degree = entry.degree;
                    let capacity = self.sizing.capacity(degree, total - placed);
                    self.link_new_block(v, capacity, degree)
                }
            };

            let (room, data) = {
                let b = self.meta.block(tail);
                ((b.capacity - b.size) as usize, b.data)
            };
            let mut written = 0usize;
            let mut t_first = None;
            let mut t_last = 0;
            let start = self.data.segment(data).len() as u32;
            while written < room {
                let Some(s) = slots.next() else { break };
                let seg = self.data.segment_mut(data);
                seg.neighbors.push(s.neighbor);
                seg.edge_ids.push(s.edge_id);
                seg.timestamps.push(s.timestamp);
                seg.valid.push(true);
                t_first.get_or_insert(s.timestamp);
                t_last = s.timestamp;
                let r = SlotRef {
                    block: tail,
                    slot: start + written as u32,
                };
                let ok = self
                    .copies
                    .entry(s.edge_id)
                    .or_insert(EdgeCopies {
                        first: None,
                        second: None,
                    })
                    .push(r);
                debug_assert!(ok, "edge {} stored more than twice", s.edge_id);
                written += 1;
            }

            let b = self.meta.block_mut(tail);
            if b.size == 0 {
                b.t_min = t_first.expect("wrote at least one edge");
            }
            b.size += written as u32;
            b.t_max = t_last;
            self.meta.nodes[v as usize].degree += written as u64;
            placed += written;
        }
    }

    fn link_new_block(&mut self, v: NodeId, capacity: usize, degree: u64) -> BlockHandle {
        let data = self.data.alloc(capacity);
        let prev = self.meta.nodes[v as usize].tail_block;
        let h = self.meta.alloc(BlockMeta {
            node: v,
            capacity: capacity as u32,
            size: 0,
            t_min: 0,
            t_max: 0,
            prev,
            next: None,
            data,
            degree_at_alloc: degree,
        });
        if let Some(p) = prev {
            self.meta.block_mut(p).next = Some(h);
        }
        let n = &mut self.meta.nodes[v as usize];
        if n.head_block.is_none() {
            n.head_block = Some(h);
        }
        n.tail_block = Some(h);
        n.num_blocks += 1;
        h
    }

    /// Soft-deletes edges by id. Unknown or already deleted ids are skipped.
    pub fn delete_edges(&mut self, ids: &[EdgeId]) -> usize {
        let mut deleted = 0;
        for id in ids {
            let Some(copies) = self.copies.get(id).copied() else {
                continue;
            };
            if self.invalidate_copies(copies.iter()) > 0 {
                deleted += 1;
                self.live_edges -= 1;
            }
        }
        deleted
    }

    /// Flips validity of the given slots, returns how many were live.
    fn invalidate_copies(&mut self, refs: impl Iterator<Item = SlotRef>) -> usize {
        let mut flipped = 0;
        for r in refs {
            let b = self.meta.block(r.block);
            let (node, data) = (b.node, b.data);
            let slot = &mut self.data.segment_mut(data).valid[r.slot as usize];
            if *slot {
                *slot = false;
                self.meta.nodes[node as usize].degree -= 1;
                flipped += 1;
            }
        }
        flipped
    }

    /// Marks `v` invalid. Returns false if `v` is unknown or already deleted.
    pub fn delete_node(&mut self, v: NodeId) -> bool {
        match self.meta.nodes.get_mut(v as usize) {
            Some(n) if n.valid => {
                n.valid = false;
                true
            }
            _ => false,
        }
    }

    /// Moves every block whose newest edge is older than `cutoff` to `sink`
    /// and unlinks it.
    ///
    /// The whole file image is written before anything is unlinked, so a
    /// failing sink leaves the graph untouched. In undirected graphs the
    /// mirror copy of an offloaded edge that stays behind in a newer block is
    /// soft-deleted, so the edge disappears from both endpoints.
    pub fn offload_before<W: Write>(&mut self, cutoff: Timestamp, sink: &mut W) -> Result<OffloadSummary> {
        let mut victims: Vec<BlockHandle> = Vec::new();
        for n in &self.meta.nodes {
            let mut cur = n.head_block;
            while let Some(h) = cur {
                let b = self.meta.block(h);
                if b.t_max >= cutoff {
                    break;
                }
                victims.push(h);
                cur = b.next;
            }
        }

        let image = offload::encode(
            victims
                .iter()
                .map(|&h| {
                    let b = self.meta.block(h);
                    (b.node, self.data.segment(b.data))
                }),
        );
        sink.write_all(&image)?;
        sink.flush()?;

        let mut summary = OffloadSummary::default();
        let mut offloaded_ids = Vec::new();
        for h in victims {
            let b = self.meta.release(h);
            let seg = self.data.release(b.data, b.capacity as usize);
            let n = &mut self.meta.nodes[b.node as usize];
            n.head_block = b.next;
            if b.next.is_none() {
                n.tail_block = None;
            }
            n.num_blocks -= 1;
            n.degree -= seg.valid.iter().filter(|&&x| x).count() as u64;
            if let Some(next) = b.next {
                self.meta.block_mut(next).prev = None;
            }

            for (&id, &live) in seg.edge_ids.iter().zip(&seg.valid) {
                if let Some(c) = self.copies.get_mut(&id) {
                    c.remove_block(h);
                }
                if live {
                    offloaded_ids.push(id);
                }
            }
            summary.blocks += 1;
            summary.edges += seg.len();
        }

        offloaded_ids.sort_unstable();
        offloaded_ids.dedup();
        for id in offloaded_ids {
            let Some(c) = self.copies.get(&id).copied() else {
                continue;
            };
            self.invalidate_copies(c.iter());
            self.live_edges -= 1;
        }
        self.copies.retain(|_, c| !c.is_empty());
        Ok(summary)
    }

    pub fn storage_stats(&self) -> StorageStats {
        let mut lists = 0usize;
        let mut counted = 0usize;
        let mut max_list_len = 0usize;
        for n in &self.meta.nodes {
            max_list_len = max_list_len.max(n.num_blocks);
            if n.degree > 0 {
                lists += n.num_blocks;
                counted += 1;
            }
        }
        let (mut wasted, mut written) = (0u64, 0u64);
        for b in self.meta.live_block_iter() {
            wasted += (b.capacity - b.size) as u64;
            written += b.size as u64;
        }
        StorageStats {
            avg_list_len: if counted == 0 {
                0.0
            } else {
                lists as f64 / counted as f64
            },
            max_list_len,
            edge_data_bytes: self.data.allocated_slots() * EDGE_SLOT_BYTES,
            metadata_bytes: (self.meta.nodes.len() * mem::size_of::<NodeEntry>()
                + self.meta.live_blocks() * mem::size_of::<BlockMeta>())
                as u64,
            wasted_slots: wasted,
            written_slots: written,
        }
    }
}
