//! Temporal neighborhood sampling.
//!
//! For every source the sampler walks the node's block list from the tail
//! (newest) towards the head, skipping blocks that start after the window
//! and stopping at the first block that ends before it. Inside overlapping
//! blocks the window bounds are located by binary search. Candidates are then
//! reduced to at most `fanout` neighbors by the selected policy.
//!
//! Randomness is drawn from a stream keyed by the layer seed and the source's
//! `(node, t_start, t_end)` query, so the result for a source does not depend
//! on where it sits in the batch, on the worker count, or on which machine
//! serves it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DynamicGraph;
use crate::{EdgeId, NodeId, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Recent,
    Uniform,
    TimeWindow,
}

impl PolicyKind {
    pub fn code(self) -> u8 {
        match self {
            PolicyKind::Recent => 0,
            PolicyKind::Uniform => 1,
            PolicyKind::TimeWindow => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PolicyKind::Recent),
            1 => Some(PolicyKind::Uniform),
            2 => Some(PolicyKind::TimeWindow),
            _ => None,
        }
    }
}

/// Neighbor selection policy plus the optional look-back window `delta`.
///
/// `TimeWindow` requires `delta` and samples uniformly inside `[t - delta, t)`.
/// `Recent` and `Uniform` look back without bound unless `delta` is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub kind: PolicyKind,
    pub delta: Option<Timestamp>,
}

impl SamplingPolicy {
    pub fn recent() -> Self {
        Self {
            kind: PolicyKind::Recent,
            delta: None,
        }
    }

    pub fn uniform() -> Self {
        Self {
            kind: PolicyKind::Uniform,
            delta: None,
        }
    }

    pub fn time_window(delta: Timestamp) -> Self {
        Self {
            kind: PolicyKind::TimeWindow,
            delta: Some(delta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.delta) {
            (PolicyKind::TimeWindow, None) => {
                Err(Error::Argument("time-window policy requires delta".into()))
            }
            (_, Some(d)) if d <= 0 => Err(Error::Argument(format!("delta must be positive, got {d}"))),
            _ => Ok(()),
        }
    }

    /// Query window `[start, end)` for a source queried at `t`.
    pub fn window(&self, t: Timestamp) -> (Timestamp, Timestamp) {
        match self.delta {
            Some(d) => (t.saturating_sub(d), t),
            None => (Timestamp::MIN, t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub targets: Vec<NodeId>,
    pub timestamps: Vec<Timestamp>,
    pub fanouts: Vec<usize>,
    pub policy: SamplingPolicy,
    pub seed: u64,
}

impl SampleRequest {
    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.timestamps.len() {
            return Err(Error::Argument(format!(
                "{} targets but {} timestamps",
                self.targets.len(),
                self.timestamps.len()
            )));
        }
        if self.fanouts.contains(&0) {
            return Err(Error::Argument("fanouts must be at least 1".into()));
        }
        self.policy.validate()
    }
}

/// One hop of a sample. `offsets[i]..offsets[i + 1]` delimits the neighbors
/// drawn for `sources[i]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLayer {
    pub sources: Vec<(NodeId, Timestamp)>,
    pub neighbors: Vec<NodeId>,
    pub edge_ids: Vec<EdgeId>,
    pub edge_timestamps: Vec<Timestamp>,
    pub offsets: Vec<usize>,
}

impl SampleLayer {
    fn with_sources(sources: Vec<(NodeId, Timestamp)>) -> Self {
        let mut offsets = Vec::with_capacity(sources.len() + 1);
        offsets.push(0);
        Self {
            sources,
            offsets,
            ..Default::default()
        }
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Range of neighbor positions belonging to source `i`.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn push_source(&mut self, picked: &[Candidate]) {
        for c in picked {
            self.neighbors.push(c.neighbor);
            self.edge_ids.push(c.edge_id);
            self.edge_timestamps.push(c.timestamp);
        }
        self.offsets.push(self.neighbors.len());
    }

    /// Per-source neighbor lists, in source order.
    pub fn per_source(&self) -> impl Iterator<Item = Vec<Candidate>> + '_ {
        (0..self.sources.len()).map(move |i| {
            self.range(i)
                .map(|j| Candidate {
                    neighbor: self.neighbors[j],
                    edge_id: self.edge_ids[j],
                    timestamp: self.edge_timestamps[j],
                })
                .collect()
        })
    }
}

/// Multi-hop sampling result; layer `l + 1` is sourced from layer `l`'s
/// `(neighbor, edge timestamp)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredSample {
    pub layers: Vec<SampleLayer>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    edge_ids: Vec<EdgeId>,
    timestamps: Vec<Timestamp>,
}

#[derive(Serialize, Deserialize)]
struct SampleJson {
    layers: Vec<LayerJson>,
}

impl LayeredSample {
    /// `{"layers":[{"offsets":[],"neighbors":[],"edge_ids":[],"timestamps":[]}]}`
    pub fn to_json(&self) -> String {
        let doc = SampleJson {
            layers: self
                .layers
                .iter()
                .map(|l| LayerJson {
                    offsets: l.offsets.clone(),
                    neighbors: l.neighbors.clone(),
                    edge_ids: l.edge_ids.clone(),
                    timestamps: l.edge_timestamps.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("sample serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub neighbor: NodeId,
    pub edge_id: EdgeId,
    pub timestamp: Timestamp,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed used for hop `hop` of a request seeded with `seed`.
pub fn layer_seed(seed: u64, hop: usize) -> u64 {
    splitmix64(seed ^ splitmix64(hop as u64 + 1))
}

fn source_rng(seed: u64, node: NodeId, t_start: Timestamp, t_end: Timestamp) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ node);
    h = splitmix64(h ^ t_start as u64);
    h = splitmix64(h ^ t_end as u64);
    ChaCha8Rng::seed_from_u64(h)
}

/// All valid in-window edges of `v`, in chronological order.
pub fn collect_candidates(
    g: &DynamicGraph,
    v: NodeId,
    t_start: Timestamp,
    t_end: Timestamp,
    block_skip: bool,
) -> Vec<Candidate> {
    let Some(node) = g.read_node(v) else {
        return Vec::new();
    };
    if !node.valid {
        return Vec::new();
    }

    // newest block first; ranges are replayed oldest first below
    let mut ranges = Vec::new();
    let mut cur = node.tail_block;
    while let Some(h) = cur {
        let b = g.read_block(h);
        cur = b.prev;
        let (lo, hi) = if block_skip {
            if t_end < b.t_min {
                continue;
            }
            if t_start > b.t_max {
                break;
            }
            if t_start <= b.t_min && b.t_max < t_end {
                (0, b.size as usize)
            } else {
                let seg = g.segment(b.data);
                let lo = seg.timestamps.partition_point(|&t| t < t_start);
                let hi = seg.timestamps.partition_point(|&t| t < t_end);
                (lo, hi)
            }
        } else {
            (0, b.size as usize)
        };
        if lo < hi {
            ranges.push((b, lo, hi));
        }
    }
    let mut out = Vec::with_capacity(ranges.iter().map(|(_, lo, hi)| hi - lo).sum());
    for &(b, lo, hi) in ranges.iter().rev() {
        let seg = g.read_segment(b, hi - lo);
        out.extend(
            (lo..hi)
                .filter(|&i| {
                    let t = seg.timestamps[i];
                    t >= t_start && t < t_end && seg.valid[i]
                })
                .filter(|&i| g.node(seg.neighbors[i]).is_none_or(|n| n.valid))
                .map(|i| Candidate {
                    neighbor: seg.neighbors[i],
                    edge_id: seg.edge_ids[i],
                    timestamp: seg.timestamps[i],
                }),
        );
    }
    out
}

/// The `fanout` newest valid in-window edges of `v`, newest first.
///
/// Each node's list is ordered by `(timestamp, edge id)`, so walking it
/// backwards and stopping after `fanout` hits yields the same picks as
/// sorting every candidate.
pub fn collect_recent(
    g: &DynamicGraph,
    v: NodeId,
    t_start: Timestamp,
    t_end: Timestamp,
    fanout: usize,
) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(fanout.min(64));
    let Some(node) = g.read_node(v) else {
        return out;
    };
    if !node.valid || fanout == 0 {
        return out;
    }
    let mut cur = node.tail_block;
    while let Some(h) = cur {
        let b = g.read_block(h);
        cur = b.prev;
        if t_end < b.t_min {
            continue;
        }
        if t_start > b.t_max {
            break;
        }
        let seg = g.segment(b.data);
        let lo = seg.timestamps.partition_point(|&t| t < t_start);
        let hi = seg.timestamps.partition_point(|&t| t < t_end);
        let mut touched = 0;
        for i in (lo..hi).rev() {
            touched += 1;
            if seg.valid[i] && g.node(seg.neighbors[i]).is_none_or(|n| n.valid) {
                out.push(Candidate {
                    neighbor: seg.neighbors[i],
                    edge_id: seg.edge_ids[i],
                    timestamp: seg.timestamps[i],
                });
                if out.len() == fanout {
                    break;
                }
            }
        }
        if touched > 0 {
            g.read_segment(b, touched);
        }
        if out.len() == fanout {
            break;
        }
    }
    out
}

/// Reduces chronological candidates to at most `fanout` picks.
pub fn select(
    mut candidates: Vec<Candidate>,
    fanout: usize,
    kind: PolicyKind,
    rng: &mut impl Rng,
) -> Vec<Candidate> {
    match kind {
        PolicyKind::Recent => {
            candidates.sort_by(|a, b| {
                b.timestamp
                    .cmp(&a.timestamp)
                    .then(b.edge_id.cmp(&a.edge_id))
            });
            candidates.truncate(fanout);
            candidates
        }
        PolicyKind::Uniform | PolicyKind::TimeWindow => {
            let n = candidates.len();
            if fanout >= n {
                return candidates;
            }
            // partial Fisher-Yates over positions
            for i in 0..fanout {
                let j = rng.gen_range(i..n);
                candidates.swap(i, j);
            }
            candidates.truncate(fanout);
            candidates
        }
    }
}

/// Sampler configuration: worker count and whether block skipping is used.
#[derive(Clone)]
pub struct Sampler {
    pool: Option<Arc<rayon::ThreadPool>>,
    block_skip: bool,
}

impl Default for Sampler {
    fn default() -> Self {
        Self {
            pool: None,
            block_skip: true,
        }
    }
}

impl std::fmt::Debug for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sampler")
            .field("workers", &self.workers())
            .field("block_skip", &self.block_skip)
            .finish()
    }
}

impl Sampler {
    pub fn new(workers: usize) -> Result<Self> {
        let pool = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(Self {
            pool,
            block_skip: true,
        })
    }

    /// Scan every block instead of using the timestamp bounds to skip.
    pub fn without_block_skip(mut self) -> Self {
        self.block_skip = false;
        self
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Samples up to `fanout` neighbors per source inside `[t_starts[i], t_ends[i])`.
    ///
    /// Unknown or deleted sources yield an empty slice.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_layer(
        &self,
        g: &DynamicGraph,
        sources: &[NodeId],
        t_starts: &[Timestamp],
        t_ends: &[Timestamp],
        fanout: usize,
        kind: PolicyKind,
        seed: u64,
    ) -> Result<SampleLayer> {
        if sources.len() != t_starts.len() || sources.len() != t_ends.len() {
            return Err(Error::Argument(format!(
                "mismatched lengths: {} sources, {} starts, {} ends",
                sources.len(),
                t_starts.len(),
                t_ends.len()
            )));
        }
        if let Some(i) = (0..sources.len()).find(|&i| t_starts[i] > t_ends[i]) {
            return Err(Error::Argument(format!(
                "source {i}: window start {} after end {}",
                t_starts[i], t_ends[i]
            )));
        }

        let one = |i: usize| {
            let (v, ts, te) = (sources[i], t_starts[i], t_ends[i]);
            if kind == PolicyKind::Recent && self.block_skip {
                return collect_recent(g, v, ts, te, fanout);
            }
            let cands = collect_candidates(g, v, ts, te, self.block_skip);
            let mut rng = source_rng(seed, v, ts, te);
            select(cands, fanout, kind, &mut rng)
        };
        let picked: Vec<Vec<Candidate>> = match &self.pool {
            Some(pool) => pool.install(|| (0..sources.len()).into_par_iter().map(one).collect()),
            None => (0..sources.len()).map(one).collect(),
        };

        let mut layer = SampleLayer::with_sources(
            sources.iter().copied().zip(t_ends.iter().copied()).collect(),
        );
        for p in &picked {
            layer.push_source(p);
        }
        Ok(layer)
    }

    pub fn sample_khop(&self, g: &DynamicGraph, req: &SampleRequest) -> Result<LayeredSample> {
        khop_driver(req, |_, nodes, starts, ends, fanout, seed| {
            self.sample_layer(g, nodes, starts, ends, fanout, req.policy.kind, seed)
        })
    }

    /// Temporal random walk of up to `length` steps, excluding the start.
    pub fn random_walk(
        &self,
        g: &DynamicGraph,
        start: NodeId,
        t: Timestamp,
        length: usize,
        policy: SamplingPolicy,
        seed: u64,
    ) -> Result<Vec<(NodeId, Timestamp)>> {
        if length == 0 {
            return Err(Error::Argument("walk length must be at least 1".into()));
        }
        let req = SampleRequest {
            targets: vec![start],
            timestamps: vec![t],
            fanouts: vec![1; length],
            policy,
            seed,
        };
        let sample = self.sample_khop(g, &req)?;
        Ok(sample
            .layers
            .iter()
            .map_while(|l| Some((*l.neighbors.first()?, l.edge_timestamps[0])))
            .collect())
    }
}

/// Runs the hop loop of a k-hop request, delegating each hop to `layer_fn`.
///
/// `layer_fn(hop, sources, t_starts, t_ends, fanout, layer_seed)` must return
/// one layer for exactly those sources. Shared by the local sampler and the
/// distributed one so both derive windows and seeds identically.
pub fn khop_driver<F>(req: &SampleRequest, mut layer_fn: F) -> Result<LayeredSample>
where
    F: FnMut(usize, &[NodeId], &[Timestamp], &[Timestamp], usize, u64) -> Result<SampleLayer>,
{
    req.validate()?;
    let mut out = LayeredSample::default();
    let mut nodes = req.targets.clone();
    let mut times = req.timestamps.clone();
    for (hop, &fanout) in req.fanouts.iter().enumerate() {
        let (starts, ends): (Vec<_>, Vec<_>) = times.iter().map(|&t| req.policy.window(t)).unzip();
        let layer = layer_fn(hop, &nodes, &starts, &ends, fanout, layer_seed(req.seed, hop))?;
        if layer.num_sources() != nodes.len() || layer.offsets.len() != nodes.len() + 1 {
            return Err(Error::Shape(format!(
                "hop {hop}: layer has {} sources, expected {}",
                layer.num_sources(),
                nodes.len()
            )));
        }
        nodes = layer.neighbors.clone();
        times = layer.edge_timestamps.clone();
        out.layers.push(layer);
    }
    Ok(out)
}

/// Single-threaded sampling with block skipping.
pub fn sample_khop(g: &DynamicGraph, req: &SampleRequest) -> Result<LayeredSample> {
    Sampler::default().sample_khop(g, req)
}

pub fn sample_layer(
    g: &DynamicGraph,
    sources: &[NodeId],
    t_starts: &[Timestamp],
    t_ends: &[Timestamp],
    fanout: usize,
    kind: PolicyKind,
    seed: u64,
) -> Result<SampleLayer> {
    Sampler::default().sample_layer(g, sources, t_starts, t_ends, fanout, kind, seed)
}

pub fn random_walk(
    g: &DynamicGraph,
    start: NodeId,
    t: Timestamp,
    length: usize,
    policy: SamplingPolicy,
    seed: u64,
) -> Result<Vec<(NodeId, Timestamp)>> {
    Sampler::default().random_walk(g, start, t, length, policy, seed)
}
