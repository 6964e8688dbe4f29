//! The continuous-learning loop.
//!
//! The first `initial_fraction` of the stream is ingested up front. The rest
//! is cut into incremental batches. Each batch is ingested, then a round of
//! `epochs` passes over its training set runs the sample + fetch workload
//! with the feature caches in front of the host feature stores. Model
//! compute is a no-op or an optional sleep.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tgflow_core::cache::{CacheKey, VectorCache};
use tgflow_core::features::{EdgeFeatureTable, NodeFeatureTable, NodeMemoryTable};
use tgflow_core::graph::{DynamicGraph, InsertionBatch, TemporalEdge};
use tgflow_core::partition::{balance_stats, BalanceStats, PartitionSpec};
use tgflow_core::sampler::{SampleRequest, Sampler};
use tgflow_core::{EdgeId, NodeId};

use crate::config::{BatchPolicy, CacheConfig, RunConfig, Source};
use crate::error::{HarnessError, Result};
use crate::generate::generate_synthetic;
use crate::ingest::{read_edge_file, IngestOptions};
use crate::metrics::{access_distribution, jaccard, AccessDistribution};

/// An ingested edge with the id the graph assigned to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainEdge {
    pub id: EdgeId,
    pub edge: TemporalEdge,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundPlan {
    /// Training edges in time order, ties by edge id.
    pub training: Vec<TrainEdge>,
    pub replayed: usize,
}

/// New edges plus `round(ratio * |new|)` edges drawn uniformly from
/// `history`, without replacement while history is large enough.
pub fn plan_round<R: Rng>(new: &[TrainEdge], history: &[TrainEdge], ratio: f64, rng: &mut R) -> Result<RoundPlan> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(HarnessError::Invalid(format!("replay_ratio must be in [0, 1], got {ratio}")));
    }
    let want = (ratio * new.len() as f64).round() as usize;
    let mut training = new.to_vec();
    if want > 0 {
        if history.is_empty() {
            return Err(HarnessError::Invalid("replay requested with no historical edges".into()));
        }
        if want <= history.len() {
            training.extend(index::sample(rng, history.len(), want).into_iter().map(|i| history[i]));
        } else {
            training.extend((0..want).map(|_| history[rng.gen_range(0..history.len())]));
        }
    }
    training.sort_by_key(|e| (e.edge.timestamp, e.id));
    Ok(RoundPlan { training, replayed: want })
}

/// Splits the stream after the initial portion into incremental batches,
/// returned as index ranges into `edges`.
pub fn split_batches(edges: &[TemporalEdge], start: usize, policy: BatchPolicy) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    match policy {
        BatchPolicy::ByCount(n) => {
            let mut i = start;
            while i < edges.len() {
                let j = (i + n).min(edges.len());
                out.push(i..j);
                i = j;
            }
        }
        BatchPolicy::ByTime(interval) => {
            let mut i = start;
            while i < edges.len() {
                let end_t = edges[i].timestamp + interval;
                let j = i + edges[i..].partition_point(|e| e.timestamp < end_t);
                out.push(i..j);
                i = j;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub node_hit_rate: f64,
    pub edge_hit_rate: f64,
    /// Hit rates over the first `initial_window` mini-batches.
    pub initial_node_hit_rate: f64,
    pub initial_edge_hit_rate: f64,
    pub sampling_time: f64,
    pub fetch_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub new_edges: usize,
    pub replayed_edges: usize,
    pub minibatches: usize,
    /// Seconds spent ingesting the batch into the graph and feature stores.
    pub graph_update_time: f64,
    pub sampling_time: f64,
    pub fetch_time: f64,
    pub epochs: Vec<EpochReport>,
    /// Similarity of this round's sampled sets with the previous round's.
    pub jaccard_nodes: Option<f64>,
    pub jaccard_edges: Option<f64>,
    pub sampled_nodes: usize,
    pub sampled_edges: usize,
    pub node_access: Option<AccessDistribution>,
    pub edge_access: Option<AccessDistribution>,
    /// Balance of the stream ingested so far over `machines` partitions.
    pub partition: BalanceStats,
    /// Share of requested feature bytes that are edge features.
    pub edge_feature_share: f64,
}

impl RoundReport {
    /// Copy with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.graph_update_time = 0.0;
        r.sampling_time = 0.0;
        r.fetch_time = 0.0;
        for e in &mut r.epochs {
            e.sampling_time = 0.0;
            e.fetch_time = 0.0;
        }
        r
    }
}

/// Deterministic stand-in feature values.
fn feature_row(id: u64, dim: usize, salt: u64, out: &mut Vec<f32>) {
    let mut x = id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt;
    for _ in 0..dim {
        x ^= x >> 29;
        x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        out.push((x >> 40) as f32 / (1u64 << 24) as f32);
    }
}

fn load_stream(cfg: &RunConfig) -> Result<Vec<TemporalEdge>> {
    match &cfg.source {
        Source::Csv(path) => Ok(read_edge_file(path, IngestOptions::default())?.edges),
        Source::Synthetic(g) => generate_synthetic(g),
    }
}

fn cache_capacity(c: CacheConfig, universe: usize) -> usize {
    (c.fraction * universe as f64).round() as usize
}

#[derive(Default)]
struct HitCounter {
    hits: u64,
    total: u64,
}

impl HitCounter {
    fn add(&mut self, mask: &[bool]) {
        self.hits += mask.iter().filter(|&&h| h).count() as u64;
        self.total += mask.len() as u64;
    }

    fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

struct Stores {
    graph: DynamicGraph,
    node_features: NodeFeatureTable,
    edge_features: EdgeFeatureTable,
    memory: NodeMemoryTable,
    seen_nodes: HashSet<NodeId>,
}

impl Stores {
    fn ingest(&mut self, cfg: &RunConfig, edges: &[TemporalEdge]) -> Result<Vec<TrainEdge>> {
        let outcome = self.graph.add_edges(&InsertionBatch::new(edges.to_vec()));
        let rejected: HashSet<usize> = outcome.rejected.iter().map(|r| r.index).collect();
        if !rejected.is_empty() {
            log::warn!("{} edges rejected during ingestion", rejected.len());
        }
        let stats = self.graph.storage_stats();
        if !stats.within_waste_bound() {
            log::warn!("{} wasted of {} written edge slots", stats.wasted_slots, stats.written_slots);
        }
        let accepted: Vec<TrainEdge> = edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !rejected.contains(i))
            .zip(&outcome.edge_ids)
            .map(|((_, e), &id)| TrainEdge { id, edge: *e })
            .collect();

        let mut rows = Vec::with_capacity(accepted.len() * cfg.edge_dim);
        for e in &accepted {
            feature_row(e.id, cfg.edge_dim, 2, &mut rows);
        }
        let ids: Vec<EdgeId> = accepted.iter().map(|e| e.id).collect();
        self.edge_features.append_edge_features(&ids, &rows)?;

        let fresh: Vec<NodeId> = accepted
            .iter()
            .flat_map(|e| [e.edge.src, e.edge.dst])
            .filter(|v| self.seen_nodes.insert(*v))
            .collect();
        let mut rows = Vec::with_capacity(fresh.len() * cfg.node_dim);
        for &v in &fresh {
            feature_row(v, cfg.node_dim, 1, &mut rows);
        }
        self.node_features.upsert(&fresh, &rows)?;
        Ok(accepted)
    }
}

struct Caches {
    node: VectorCache,
    edge: VectorCache,
}

impl Caches {
    fn cold(cfg: &RunConfig, nodes: usize, edges: usize) -> Result<Self> {
        Ok(Self {
            node: VectorCache::new(
                cfg.node_cache.policy,
                cache_capacity(cfg.node_cache, nodes),
                cfg.node_dim,
                cfg.lambda,
            )?,
            edge: VectorCache::new(
                cfg.edge_cache.policy,
                cache_capacity(cfg.edge_cache, edges),
                cfg.edge_dim,
                cfg.lambda,
            )?,
        })
    }

    fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.node.persist(&mut BufWriter::new(File::create(dir.join("node_cache.tgcs"))?))?;
        self.edge.persist(&mut BufWriter::new(File::create(dir.join("edge_cache.tgcs"))?))?;
        Ok(())
    }

    fn load(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<VectorCache> {
            Ok(VectorCache::load(&mut BufReader::new(File::open(dir.join(name))?))?)
        };
        Ok(Self {
            node: open("node_cache.tgcs")?,
            edge: open("edge_cache.tgcs")?,
        })
    }
}

fn dedup<T: Copy + Eq + std::hash::Hash>(xs: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut seen = HashSet::new();
    xs.into_iter().filter(|x| seen.insert(*x)).collect()
}

/// Per-round seed for one mini-batch.
pub fn minibatch_seed(seed: u64, round: usize, epoch: usize, mb: usize) -> u64 {
    let mut x = seed ^ 0x243f_6a88_85a3_08d3;
    for v in [round as u64, epoch as u64, mb as u64] {
        x = (x ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        x ^= x >> 31;
    }
    x
}

/// Runs the loop over the configured source, calling `sink` after each round.
pub fn run_continuous_with<F>(cfg: &RunConfig, mut sink: F) -> Result<()>
where
    F: FnMut(&RoundReport) -> Result<()>,
{
    cfg.validate()?;
    let edges = load_stream(cfg)?;
    run_on_stream(cfg, &edges, &mut sink)
}

pub fn run_continuous(cfg: &RunConfig) -> Result<Vec<RoundReport>> {
    let mut out = Vec::new();
    run_continuous_with(cfg, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Same as [`run_continuous`] on an explicit, time-sorted stream.
pub fn run_on_edges(cfg: &RunConfig, edges: &[TemporalEdge]) -> Result<Vec<RoundReport>> {
    cfg.validate()?;
    let mut out = Vec::new();
    run_on_stream(cfg, edges, &mut |r: &RoundReport| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

fn run_on_stream(
    cfg: &RunConfig,
    edges: &[TemporalEdge],
    sink: &mut dyn FnMut(&RoundReport) -> Result<()>,
) -> Result<()> {
    if let Some(i) = edges.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(HarnessError::Ingest {
            row: i as u64 + 2,
            message: "stream is not sorted by timestamp".into(),
        });
    }
    let universe_nodes = edges.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(0) as usize;
    let mut stores = Stores {
        graph: DynamicGraph::new(cfg.directedness, cfg.tau)?,
        node_features: NodeFeatureTable::new(cfg.node_dim),
        edge_features: EdgeFeatureTable::new(cfg.edge_dim),
        memory: NodeMemoryTable::new(cfg.memory_dim),
        seen_nodes: HashSet::new(),
    };
    let sampler = Sampler::new(cfg.sampler_workers)?;
    let pspec = PartitionSpec::new(cfg.machines)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let initial = ((cfg.initial_fraction * edges.len() as f64).floor() as usize).max(1).min(edges.len());
    let mut history = stores.ingest(cfg, &edges[..initial])?;
    log::info!("ingested initial {} edges", history.len());

    let mut caches = Caches::cold(cfg, universe_nodes, edges.len())?;
    let mut prev_sets: Option<(HashSet<NodeId>, HashSet<EdgeId>)> = None;

    for (round, range) in split_batches(edges, initial, cfg.batch).into_iter().enumerate() {
        let t0 = Instant::now();
        let new = stores.ingest(cfg, &edges[range.clone()])?;
        let graph_update_time = t0.elapsed().as_secs_f64();

        let plan = plan_round(&new, &history, cfg.replay_ratio, &mut rng)?;

        if !cfg.reuse {
            caches = Caches::cold(cfg, universe_nodes, edges.len())?;
        } else if let (Some(dir), true) = (&cfg.cache_dir, round > 0) {
            caches = Caches::load(dir)?;
        }
        // an empty snapshot would only discard each epoch's warmup
        let node_snap = (!caches.node.is_empty()).then(|| caches.node.snapshot());
        let edge_snap = (!caches.edge.is_empty()).then(|| caches.edge.snapshot());

        let mut node_access: HashMap<NodeId, u64> = HashMap::new();
        let mut edge_access: HashMap<EdgeId, u64> = HashMap::new();
        let (mut node_bytes, mut edge_bytes, mut mem_bytes) = (0u64, 0u64, 0u64);
        let mut epochs = Vec::with_capacity(cfg.epochs);
        let minibatches: Vec<&[TrainEdge]> = plan.training.chunks(cfg.minibatch_size).collect();
        let mut rows = Vec::new();

        for epoch in 0..cfg.epochs {
            if cfg.restore {
                if let Some(snap) = &node_snap {
                    caches.node.restore(snap)?;
                }
                if let Some(snap) = &edge_snap {
                    caches.edge.restore(snap)?;
                }
            }
            let (mut nh, mut eh, mut nh0, mut eh0) = (HitCounter::default(), HitCounter::default(), HitCounter::default(), HitCounter::default());
            let (mut t_sample, mut t_fetch) = (Duration::ZERO, Duration::ZERO);
            for (mb, batch) in minibatches.iter().enumerate() {
                let ts = Instant::now();
                let req = SampleRequest {
                    targets: batch.iter().flat_map(|e| [e.edge.src, e.edge.dst]).collect(),
                    timestamps: batch.iter().flat_map(|e| [e.edge.timestamp; 2]).collect(),
                    fanouts: cfg.fanouts.clone(),
                    policy: cfg.policy,
                    seed: minibatch_seed(cfg.seed, round, epoch, mb),
                };
                let sample = sampler.sample_khop(&stores.graph, &req)?;
                t_sample += ts.elapsed();

                let tf = Instant::now();
                let nodes: Vec<CacheKey> = dedup(
                    req.targets
                        .iter()
                        .copied()
                        .chain(sample.layers.iter().flat_map(|l| l.neighbors.iter().copied())),
                );
                let eids: Vec<CacheKey> = dedup(
                    batch
                        .iter()
                        .map(|e| e.id)
                        .chain(sample.layers.iter().flat_map(|l| l.edge_ids.iter().copied())),
                );
                let nf = caches.node.fetch(&nodes);
                if !nf.miss_keys.is_empty() {
                    let filled = stores.node_features.get_node_features(&nf.miss_keys);
                    caches.node.insert_batch(&nf.miss_keys, &filled.data)?;
                }
                let ef = caches.edge.fetch(&eids);
                if !ef.miss_keys.is_empty() {
                    let filled = stores.edge_features.get_edge_features(&ef.miss_keys);
                    caches.edge.insert_batch(&ef.miss_keys, &filled.data)?;
                }
                if cfg.memory_dim > 0 {
                    let _ = stores.memory.get_memory(&nodes);
                }
                t_fetch += tf.elapsed();

                count_hits(&mut nh, &mut nh0, &nf.hit_mask, mb < cfg.initial_window);
                count_hits(&mut eh, &mut eh0, &ef.hit_mask, mb < cfg.initial_window);
                if epoch == 0 {
                    for &v in &nodes {
                        *node_access.entry(v).or_default() += 1;
                    }
                    for &e in &eids {
                        *edge_access.entry(e).or_default() += 1;
                    }
                    node_bytes += (nodes.len() * cfg.node_dim * 4) as u64;
                    edge_bytes += (eids.len() * cfg.edge_dim * 4) as u64;
                    mem_bytes += (nodes.len() * cfg.memory_dim * 4) as u64;
                }

                if cfg.memory_dim > 0 {
                    // writeback for the batch's endpoints, as a memory-based model would
                    let ids: Vec<NodeId> = dedup(batch.iter().flat_map(|e| [e.edge.src, e.edge.dst]));
                    let t = batch.last().map_or(0, |e| e.edge.timestamp);
                    rows.clear();
                    for &v in &ids {
                        feature_row(v ^ t as u64, cfg.memory_dim, 3, &mut rows);
                    }
                    stores.memory.update_memory(&ids, &rows, &vec![t; ids.len()])?;
                }
                if cfg.compute_sleep_us > 0 {
                    std::thread::sleep(Duration::from_micros(cfg.compute_sleep_us));
                }
            }
            epochs.push(EpochReport {
                node_hit_rate: nh.rate(),
                edge_hit_rate: eh.rate(),
                initial_node_hit_rate: nh0.rate(),
                initial_edge_hit_rate: eh0.rate(),
                sampling_time: t_sample.as_secs_f64(),
                fetch_time: t_fetch.as_secs_f64(),
            });
        }

        if cfg.reuse {
            if let Some(dir) = &cfg.cache_dir {
                caches.persist(dir)?;
            }
        }

        let node_set: HashSet<NodeId> = node_access.keys().copied().collect();
        let edge_set: HashSet<EdgeId> = edge_access.keys().copied().collect();
        let (jaccard_nodes, jaccard_edges) = match &prev_sets {
            Some((pn, pe)) => (Some(jaccard(pn, &node_set)), Some(jaccard(pe, &edge_set))),
            None => (None, None),
        };
        let counts = |m: &HashMap<u64, u64>| {
            let c: Vec<u64> = m.values().copied().collect();
            access_distribution(&c).ok()
        };
        let total_bytes = node_bytes + edge_bytes + mem_bytes;
        history.extend_from_slice(&new);
        let ingested: Vec<TemporalEdge> = history.iter().map(|e| e.edge).collect();
        let report = RoundReport {
            round,
            new_edges: new.len(),
            replayed_edges: plan.replayed,
            minibatches: minibatches.len(),
            graph_update_time,
            sampling_time: epochs.iter().map(|e| e.sampling_time).sum(),
            fetch_time: epochs.iter().map(|e| e.fetch_time).sum(),
            epochs,
            jaccard_nodes,
            jaccard_edges,
            sampled_nodes: node_set.len(),
            sampled_edges: edge_set.len(),
            node_access: counts(&node_access),
            edge_access: counts(&edge_access),
            partition: balance_stats(&pspec, cfg.directedness, &ingested),
            edge_feature_share: if total_bytes == 0 {
                0.0
            } else {
                edge_bytes as f64 / total_bytes as f64
            },
        };
        log::info!(
            "round {round}: {} new, {} replayed, epoch hit rates {:?}",
            report.new_edges,
            report.replayed_edges,
            report.epochs.iter().map(|e| e.node_hit_rate).collect::<Vec<_>>()
        );
        sink(&report)?;
        prev_sets = Some((node_set, edge_set));
    }
    Ok(())
}

fn count_hits(all: &mut HitCounter, initial: &mut HitCounter, mask: &[bool], in_window: bool) {
    all.add(mask);
    if in_window {
        initial.add(mask);
    }
}
