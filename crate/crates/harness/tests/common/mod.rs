#![allow(dead_code)]

use tgflow_core::graph::TemporalEdge;
use tgflow_harness::config::{BatchPolicy, RunConfig};
use tgflow_harness::generate::{generate_synthetic, GeneratorSpec};

pub const CACHE_EDGES: usize = 100_000;
pub const CACHE_BATCH: usize = 10_000;

/// Power-law stream with a stable hot set, so adjacent rounds sample
/// nearly the same nodes.
pub fn cache_stream(seed: u64) -> Vec<TemporalEdge> {
    generate_synthetic(&GeneratorSpec {
        nodes: 2_000,
        edges: CACHE_EDGES,
        skew: 2.0,
        time_span: 1_000_000,
        drift: 0.0,
        seed,
    })
    .unwrap()
}

/// Two incremental rounds of 10k edges after an initial 80k. Node cache
/// holds half the nodes; λ = 0.05 so a cold cache needs 20 updates to fill.
pub fn cache_cfg(seed: u64, reuse: bool, restore: bool) -> RunConfig {
    let mut cfg = RunConfig {
        batch: BatchPolicy::ByCount(CACHE_BATCH),
        initial_fraction: 0.8,
        minibatch_size: 600,
        fanouts: vec![10],
        lambda: 0.05,
        reuse,
        restore,
        seed,
        ..RunConfig::default()
    };
    cfg.node_cache.fraction = 0.5;
    cfg.edge_cache.fraction = 0.05;
    cfg
}
