#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tgflow_cluster::{Cluster, ClusterConfig, ClusterSpec, TransportKind};
use tgflow_core::graph::{Directedness, DynamicGraph, InsertionBatch, TemporalEdge};
use tgflow_core::sampler::{SampleRequest, SamplingPolicy};

/// A cluster and an unpartitioned graph fed the same mutations.
pub struct Twin {
    pub cluster: Cluster,
    pub local: DynamicGraph,
    pub nodes: u64,
    pub max_t: i64,
}

pub fn random_twin(seed: u64, machines: usize, workers: usize, transport: TransportKind) -> Twin {
    let mut rng = StdRng::seed_from_u64(seed);
    let dir = if rng.gen_bool(0.5) {
        Directedness::Undirected
    } else {
        Directedness::Directed
    };
    let nodes = rng.gen_range(2..40u64);
    let tau = rng.gen_range(1..8);
    let mut config = ClusterConfig::new(ClusterSpec::new(machines, workers).unwrap(), dir);
    config.sizing = tgflow_core::graph::BlockSizing::Adaptive { threshold: tau };
    config.transport = transport;
    let mut cluster = Cluster::new(config).unwrap();
    let mut local = DynamicGraph::new(dir, tau).unwrap();

    let mut t = 0i64;
    for _ in 0..rng.gen_range(1..5) {
        let n = rng.gen_range(0..120);
        let edges: Vec<TemporalEdge> = (0..n)
            .map(|_| {
                // occasional out-of-order edges exercise rejection
                t += rng.gen_range(0..3);
                let ts = if rng.gen_bool(0.05) { t - 5 } else { t };
                TemporalEdge::new(rng.gen_range(0..nodes), rng.gen_range(0..nodes), ts)
            })
            .collect();
        let a = cluster.ingest(&edges, None).unwrap();
        let b = local.add_edges(&InsertionBatch::new(edges));
        assert_eq!(a, b);
        if !b.edge_ids.is_empty() {
            for _ in 0..rng.gen_range(0..4) {
                let id = b.edge_ids[rng.gen_range(0..b.edge_ids.len())];
                assert_eq!(cluster.delete_edges(&[id]), local.delete_edges(&[id]));
            }
        }
        if rng.gen_bool(0.3) {
            let v = rng.gen_range(0..nodes + 2);
            assert_eq!(cluster.delete_node(v), local.delete_node(v));
        }
    }
    Twin {
        cluster,
        local,
        nodes,
        max_t: t,
    }
}

pub fn random_request(rng: &mut StdRng, nodes: u64, max_t: i64) -> SampleRequest {
    let n = rng.gen_range(0..12);
    let policy = match rng.gen_range(0..4) {
        0 => SamplingPolicy::recent(),
        1 => SamplingPolicy::uniform(),
        2 => SamplingPolicy::time_window(rng.gen_range(1..20)),
        _ => SamplingPolicy {
            delta: Some(rng.gen_range(1..30)),
            ..SamplingPolicy::recent()
        },
    };
    SampleRequest {
        targets: (0..n).map(|_| rng.gen_range(0..nodes + 3)).collect(),
        timestamps: (0..n).map(|_| rng.gen_range(0..max_t + 3)).collect(),
        fanouts: (0..rng.gen_range(1..4)).map(|_| rng.gen_range(1..6)).collect(),
        policy,
        seed: rng.gen(),
    }
}
