use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgflow_core::cache::{CachePolicy, VectorCache};
use tgflow_core::features::{read_feature_file, write_node_features, FeatureFile, NodeFeatureTable};
use tgflow_core::graph::{Directedness, DynamicGraph, InsertionBatch, TemporalEdge};
use tgflow_core::partition::{dispatch, PartitionSpec};
use tgflow_core::sampler::{sample_khop, sample_layer, PolicyKind, SampleRequest, SamplingPolicy};

fn stream(seed: u64, nodes: u64, n: usize) -> Vec<TemporalEdge> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0..3);
            TemporalEdge::new(rng.gen_range(0..nodes), rng.gen_range(0..nodes), t)
        })
        .collect()
}

#[test]
fn partitions_answer_for_the_nodes_they_own() {
    let edges = stream(3, 60, 2_000);
    let mut full = DynamicGraph::new(Directedness::Undirected, 8).unwrap();
    for chunk in edges.chunks(250) {
        assert!(full.add_edges(&InsertionBatch::new(chunk.to_vec())).rejected.is_empty());
    }

    let spec = PartitionSpec::new(3).unwrap();
    // replicas hold oriented half-edges
    let mut parts: Vec<DynamicGraph> = (0..3).map(|_| DynamicGraph::new(Directedness::Directed, 8).unwrap()).collect();
    for (c, chunk) in edges.chunks(250).enumerate() {
        for (p, batch) in dispatch(&spec, Directedness::Undirected, chunk, (c * 250) as u64).iter().enumerate() {
            parts[p].add_edges_with_ids(&batch.edges, &batch.edge_ids).unwrap();
        }
    }

    for v in 0..60 {
        let p = spec.assign(v);
        for kind in [PolicyKind::Recent, PolicyKind::Uniform] {
            let a = sample_layer(&full, &[v], &[100], &[2_000], 7, kind, 11).unwrap();
            let b = sample_layer(&parts[p], &[v], &[100], &[2_000], 7, kind, 11).unwrap();
            assert_eq!(a, b, "node {v}, {kind:?}");
        }
    }
}

#[test]
fn sampled_nodes_flow_through_cache_and_store() {
    let edges = stream(9, 40, 800);
    let mut g = DynamicGraph::new(Directedness::Undirected, 16).unwrap();
    g.add_edges(&InsertionBatch::new(edges));

    let dim = 4;
    let mut table = NodeFeatureTable::new(dim);
    let ids: Vec<u64> = (0..40).collect();
    let rows: Vec<f32> = ids.iter().flat_map(|&i| (0..dim).map(move |j| (i * 10 + j as u64) as f32)).collect();
    table.upsert(&ids, &rows).unwrap();
    let mut buf = Vec::new();
    write_node_features(&mut buf, &table).unwrap();
    let FeatureFile::Node(table) = read_feature_file(&mut buf.as_slice()).unwrap() else {
        panic!("expected a node feature file");
    };

    let mut cache = VectorCache::new(CachePolicy::Lru, 16, dim, 0.5).unwrap();
    let mut hits = 0;
    for round in 0..20u64 {
        let req = SampleRequest {
            targets: vec![round % 40, (round * 7) % 40],
            timestamps: vec![600, 700],
            fanouts: vec![5, 3],
            policy: SamplingPolicy::recent(),
            seed: round,
        };
        let s = sample_khop(&g, &req).unwrap();
        let mut keys: Vec<u64> = req.targets.clone();
        keys.extend(s.layers.iter().flat_map(|l| l.neighbors.iter().copied()));
        keys.sort_unstable();
        keys.dedup();

        let r = cache.fetch(&keys);
        let filled = table.get_node_features(&r.miss_keys);
        assert!(filled.found.iter().all(|&f| f));
        cache.insert_batch(&r.miss_keys, &filled.data).unwrap();
        for (i, &k) in keys.iter().enumerate() {
            if r.hit_mask[i] {
                hits += 1;
                // cached rows are the stored rows
                let got = &r.values[i * dim..(i + 1) * dim];
                assert_eq!(got, table.get(k).unwrap());
            }
        }
    }
    assert!(hits > 0);
}
