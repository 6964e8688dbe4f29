//! Sampling and feature-fetch throughput.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tgflow_core::cache::{CacheKey, CachePolicy, VectorCache};
use tgflow_core::graph::{BlockSizing, Directedness, DynamicGraph, InsertionBatch, TemporalEdge};
use tgflow_core::sampler::{SampleRequest, Sampler, SamplingPolicy};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub sizing: BlockSizing,
    pub directedness: Directedness,
    /// Edges per ingestion call while building the graph.
    pub batch_size: usize,
    pub fanouts: Vec<usize>,
    pub policy: SamplingPolicy,
    /// Roots per sampling call.
    pub minibatch_size: usize,
    /// Sampling calls per repeat.
    pub calls: usize,
    pub warmup: usize,
    pub repeats: usize,
    pub sampler_workers: usize,
    pub cache_policy: CachePolicy,
    pub cache_fraction: f64,
    pub feature_dim: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizing: BlockSizing::Adaptive { threshold: 48 },
            directedness: Directedness::Undirected,
            batch_size: 1_000,
            fanouts: vec![10, 10],
            policy: SamplingPolicy::uniform(),
            minibatch_size: 600,
            calls: 20,
            warmup: 1,
            repeats: 5,
            sampler_workers: 1,
            cache_policy: CachePolicy::Lru,
            cache_fraction: 0.1,
            feature_dim: 16,
            lambda: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub sizing: String,
    pub avg_list_len: f64,
    pub build_time: f64,
    /// Roots sampled per second, one entry per repeat.
    pub samples_per_sec: Vec<f64>,
    pub median_samples_per_sec: f64,
    pub median_neighbors_per_sec: f64,
    /// Cache keys served per second (fetch plus miss fill), per repeat.
    pub fetch_keys_per_sec: Vec<f64>,
    pub median_fetch_keys_per_sec: f64,
    pub fetch_hit_rate: f64,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Builds the graph in `batch_size` chunks and times sampling and fetching
/// against it. Roots are the endpoints of stream edges drawn uniformly,
/// queried at their edge timestamp.
pub fn bench(edges: &[TemporalEdge], spec: &BenchSpec) -> Result<BenchReport> {
    if edges.is_empty() {
        return Err(HarnessError::Invalid("bench needs at least one edge".into()));
    }
    if spec.repeats == 0 || spec.calls == 0 || spec.minibatch_size == 0 || spec.batch_size == 0 {
        return Err(HarnessError::Invalid("repeats, calls, minibatch_size and batch_size must be positive".into()));
    }
    let started = Instant::now();
    let mut g = DynamicGraph::with_sizing(spec.directedness, spec.sizing)?;
    for chunk in edges.chunks(spec.batch_size) {
        g.add_edges(&InsertionBatch::new(chunk.to_vec()));
    }
    let build_time = started.elapsed().as_secs_f64();
    let sampler = Sampler::new(spec.sampler_workers)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let requests: Vec<SampleRequest> = (0..spec.calls)
        .map(|c| {
            let (mut targets, mut timestamps) = (Vec::new(), Vec::new());
            for _ in 0..spec.minibatch_size {
                let e = edges[rng.gen_range(0..edges.len())];
                targets.push(if rng.gen() { e.src } else { e.dst });
                // include the edge itself in the half-open window
                timestamps.push(e.timestamp + 1);
            }
            SampleRequest {
                targets,
                timestamps,
                fanouts: spec.fanouts.clone(),
                policy: spec.policy,
                seed: spec.seed ^ c as u64,
            }
        })
        .collect();

    let universe = edges.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(1) as usize;
    let mut cache = VectorCache::new(
        spec.cache_policy,
        (spec.cache_fraction * universe as f64).round() as usize,
        spec.feature_dim,
        spec.lambda,
    )?;
    let mut fill: Vec<f32> = Vec::new();

    let mut samples_per_sec = Vec::with_capacity(spec.repeats);
    let mut neighbors_per_sec = Vec::with_capacity(spec.repeats);
    let mut fetch_keys_per_sec = Vec::with_capacity(spec.repeats);
    for rep in 0..spec.warmup + spec.repeats {
        let t = Instant::now();
        let mut roots = 0usize;
        let mut neighbors = 0usize;
        let mut keys: Vec<Vec<CacheKey>> = Vec::with_capacity(requests.len());
        for req in &requests {
            let s = sampler.sample_khop(&g, req)?;
            roots += req.targets.len();
            neighbors += s.layers.iter().map(|l| l.len()).sum::<usize>();
            let mut k: Vec<CacheKey> = req.targets.clone();
            k.extend(s.layers.iter().flat_map(|l| l.neighbors.iter().copied()));
            k.sort_unstable();
            k.dedup();
            keys.push(k);
        }
        let sample_secs = t.elapsed().as_secs_f64().max(1e-9);

        let t = Instant::now();
        let mut served = 0usize;
        for k in &keys {
            let r = cache.fetch(k);
            if !r.miss_keys.is_empty() {
                let n = r.miss_keys.len() * spec.feature_dim;
                if fill.len() < n {
                    fill.resize(n, 1.0);
                }
                cache.insert_batch(&r.miss_keys, &fill[..n])?;
            }
            served += k.len();
        }
        let fetch_secs = t.elapsed().as_secs_f64().max(1e-9);

        if rep >= spec.warmup {
            samples_per_sec.push(roots as f64 / sample_secs);
            neighbors_per_sec.push(neighbors as f64 / sample_secs);
            fetch_keys_per_sec.push(served as f64 / fetch_secs);
        }
    }

    Ok(BenchReport {
        sizing: spec.sizing.name().to_string(),
        avg_list_len: g.storage_stats().avg_list_len,
        build_time,
        median_samples_per_sec: median(&samples_per_sec),
        median_neighbors_per_sec: median(&neighbors_per_sec),
        samples_per_sec,
        median_fetch_keys_per_sec: median(&fetch_keys_per_sec),
        fetch_keys_per_sec,
        fetch_hit_rate: cache.stats().hit_rate,
    })
}
