//! Two-tier placement of the graph.
//!
//! Metadata (node table and block records) lives in the fast tier; the four
//! per-edge arrays of every block live in the shared tier. Both tiers count
//! reads so the metadata/edge-data access ratio can be observed.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::{EdgeId, NodeId, Timestamp};

/// Stable index of a block record in the metadata arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockHandle(pub(crate) u32);

impl BlockHandle {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Stable index of an edge segment in the shared-tier arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DataHandle(pub(crate) u32);

/// One entry of the node table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeEntry {
    pub head_block: Option<BlockHandle>,
    pub tail_block: Option<BlockHandle>,
    pub num_blocks: usize,
    /// Live out-edges stored at this node.
    pub degree: u64,
    pub valid: bool,
}

impl Default for NodeEntry {
    fn default() -> Self {
        Self {
            head_block: None,
            tail_block: None,
            num_blocks: 0,
            degree: 0,
            valid: true,
        }
    }
}

/// Fixed-size block record. The edge arrays it describes sit in the
/// shared tier behind `data`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMeta {
    pub node: NodeId,
    pub capacity: u32,
    pub size: u32,
    pub t_min: Timestamp,
    pub t_max: Timestamp,
    pub prev: Option<BlockHandle>,
    pub next: Option<BlockHandle>,
    pub data: DataHandle,
    /// Degree of the owning node when the block was allocated.
    pub degree_at_alloc: u64,
}

/// Edge arrays of one block, preallocated at the block's capacity.
#[derive(Clone, Debug, Default)]
pub struct EdgeSegment {
    pub neighbors: Vec<NodeId>,
    pub edge_ids: Vec<EdgeId>,
    pub timestamps: Vec<Timestamp>,
    pub valid: Vec<bool>,
}

impl EdgeSegment {
    fn with_capacity(capacity: usize) -> Self {
        Self {
            neighbors: Vec::with_capacity(capacity),
            edge_ids: Vec::with_capacity(capacity),
            timestamps: Vec::with_capacity(capacity),
            valid: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Bytes per edge slot in the shared tier: neighbor, edge id, timestamp, validity.
pub const EDGE_SLOT_BYTES: u64 = 8 + 8 + 8 + 1;

#[derive(Debug, Default)]
pub(crate) struct MetadataTier {
    pub nodes: Vec<NodeEntry>,
    blocks: Vec<Option<BlockMeta>>,
    free: Vec<u32>,
    live_blocks: usize,
    reads: AtomicU64,
}

impl MetadataTier {
    pub fn alloc(&mut self, meta: BlockMeta) -> BlockHandle {
        self.live_blocks += 1;
        match self.free.pop() {
            Some(i) => {
                self.blocks[i as usize] = Some(meta);
                BlockHandle(i)
            }
            None => {
                self.blocks.push(Some(meta));
                BlockHandle((self.blocks.len() - 1) as u32)
            }
        }
    }

    pub fn release(&mut self, h: BlockHandle) -> BlockMeta {
        let meta = self.blocks[h.index()].take().expect("released a freed block");
        self.free.push(h.0);
        self.live_blocks -= 1;
        meta
    }

    pub fn block(&self, h: BlockHandle) -> &BlockMeta {
        self.blocks[h.index()].as_ref().expect("dangling block handle")
    }

    /// Same as [`block`](Self::block) but counted as a tier read.
    pub fn read_block(&self, h: BlockHandle) -> &BlockMeta {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.block(h)
    }

    pub fn read_node(&self, v: NodeId) -> Option<&NodeEntry> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.nodes.get(v as usize)
    }

    pub fn block_mut(&mut self, h: BlockHandle) -> &mut BlockMeta {
        self.blocks[h.index()].as_mut().expect("dangling block handle")
    }

    pub fn live_blocks(&self) -> usize {
        self.live_blocks
    }

    pub fn live_block_iter(&self) -> impl Iterator<Item = &BlockMeta> {
        self.blocks.iter().flatten()
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_reads(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }
}

#[derive(Debug, Default)]
pub(crate) struct EdgeDataTier {
    segments: Vec<Option<EdgeSegment>>,
    free: Vec<u32>,
    allocated_slots: u64,
    reads: AtomicU64,
}

impl EdgeDataTier {
    pub fn alloc(&mut self, capacity: usize) -> DataHandle {
        self.allocated_slots += capacity as u64;
        let seg = EdgeSegment::with_capacity(capacity);
        match self.free.pop() {
            Some(i) => {
                self.segments[i as usize] = Some(seg);
                DataHandle(i)
            }
            None => {
                self.segments.push(Some(seg));
                DataHandle((self.segments.len() - 1) as u32)
            }
        }
    }

    pub fn release(&mut self, h: DataHandle, capacity: usize) -> EdgeSegment {
        self.allocated_slots -= capacity as u64;
        self.free.push(h.0);
        self.segments[h.0 as usize]
            .take()
            .expect("released a freed segment")
    }

    pub fn segment(&self, h: DataHandle) -> &EdgeSegment {
        self.segments[h.0 as usize]
            .as_ref()
            .expect("dangling data handle")
    }

    pub fn segment_mut(&mut self, h: DataHandle) -> &mut EdgeSegment {
        self.segments[h.0 as usize]
            .as_mut()
            .expect("dangling data handle")
    }

    pub fn count_reads(&self, slots: usize) {
        self.reads.fetch_add(slots as u64, Ordering::Relaxed);
    }

    pub fn allocated_slots(&self) -> u64 {
        self.allocated_slots
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn reset_reads(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }
}
