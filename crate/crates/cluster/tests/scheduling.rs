mod common;

use std::thread;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tgflow_cluster::{
    distributed_sample_khop, measure_cv, per_rank_cv, route, Cluster, ClusterConfig, ClusterSpec, WorkerId,
    WorkerTelemetry,
};
use tgflow_core::graph::{Directedness, TemporalEdge};
use tgflow_core::sampler::{SampleRequest, SamplingPolicy};

#[test]
fn route_keeps_rank() {
    let spec = ClusterSpec::new(2, 4).unwrap();
    assert_eq!(route(&spec, WorkerId::new(0, 2), 1), WorkerId::new(1, 2));
    assert_eq!(route(&spec, WorkerId::new(0, 2), 4), WorkerId::new(0, 2));
    let spec = ClusterSpec::new(5, 3).unwrap();
    for origin in spec.workers() {
        for v in 0..200 {
            let d = route(&spec, origin, v);
            assert_eq!(d.rank, origin.rank);
            assert_eq!(d.machine, v as usize % 5);
        }
    }
    assert!(ClusterSpec::new(0, 1).is_err());
    assert!(ClusterSpec::new(1, 0).is_err());
}

fn tele(times_ms: &[u64], served: &[u64]) -> Vec<WorkerTelemetry> {
    times_ms
        .iter()
        .zip(served)
        .enumerate()
        .map(|(i, (&t, &s))| WorkerTelemetry {
            worker: WorkerId::new(i, 0),
            requests_served: s,
            busy_time: Duration::from_millis(t),
            ..Default::default()
        })
        .collect()
}

#[test]
fn cv_examples() {
    assert_eq!(measure_cv(&tele(&[5, 5, 5], &[1, 1, 1])).busy_time_cv, 0.0);
    let r = measure_cv(&tele(&[2, 0], &[2, 0]));
    assert!((r.busy_time_cv - 1.0).abs() < 1e-12);
    assert_eq!(r.requests_cv, 1.0);
    assert_eq!(measure_cv(&tele(&[0, 0], &[0, 0])).requests_cv, 0.0);
    // skewed load (4, 2, 1, 1): mean 2, population variance 1.5
    let r = measure_cv(&tele(&[4, 2, 1, 1], &[4, 2, 1, 1]));
    assert!((r.requests_cv - 1.5f64.sqrt() / 2.0).abs() < 1e-12);
    assert!((r.busy_time_cv - 1.5f64.sqrt() / 2.0).abs() < 1e-9);
}

fn ring_cluster(machines: usize, workers: usize, nodes: u64) -> Cluster {
    let spec = ClusterSpec::new(machines, workers).unwrap();
    let mut c = Cluster::new(ClusterConfig::new(spec, Directedness::Undirected)).unwrap();
    let edges: Vec<TemporalEdge> = (0..nodes * 4).map(|i| TemporalEdge::new(i % nodes, (i * 7 + 1) % nodes, i as i64)).collect();
    c.ingest(&edges, None).unwrap();
    c
}

/// Every (machine, rank) trainer issues single-target requests with uniform
/// targets from its own thread.
#[test]
fn uniform_load_is_balanced_across_same_rank_workers() {
    let (machines, ranks, nodes) = (4, 4, 400u64);
    let c = ring_cluster(machines, ranks, nodes);
    let per_trainer = 10_000 / (machines * ranks);
    thread::scope(|s| {
        for origin in c.spec().workers().collect::<Vec<_>>() {
            let c = &c;
            s.spawn(move || {
                let mut rng = StdRng::seed_from_u64(c.spec().index(origin) as u64);
                for _ in 0..per_trainer {
                    let req = SampleRequest {
                        targets: vec![rng.gen_range(0..nodes)],
                        timestamps: vec![10_000],
                        fanouts: vec![4],
                        policy: SamplingPolicy::uniform(),
                        seed: rng.gen(),
                    };
                    distributed_sample_khop(c, &req, origin).unwrap();
                }
            });
        }
    });
    let t = c.telemetry();
    assert_eq!(t.iter().map(|w| w.requests_served).sum::<u64>(), (per_trainer * machines * ranks) as u64);
    assert_eq!(t.iter().map(|w| w.rank_violations).sum::<u64>(), 0);
    for (rank, cv) in per_rank_cv(c.spec(), &t).iter().enumerate() {
        assert!(cv.requests_cv < 0.06, "rank {rank}: cv {}", cv.requests_cv);
    }
    c.reset_telemetry();
    assert!(c.telemetry().iter().all(|w| w.requests_served == 0));
}

#[test]
fn one_message_per_owner_per_hop() {
    let c = ring_cluster(3, 2, 30);
    let req = SampleRequest {
        targets: (0..30).collect(),
        timestamps: vec![1_000; 30],
        fanouts: vec![2],
        policy: SamplingPolicy::recent(),
        seed: 9,
    };
    distributed_sample_khop(&c, &req, WorkerId::new(1, 1)).unwrap();
    let t = c.telemetry();
    for w in &t {
        let expect = if w.worker.rank == 1 { (1, 10) } else { (0, 0) };
        assert_eq!((w.requests_served, w.targets_sampled), expect, "{}", w.worker);
    }
}

#[test]
fn simulated_failure_surfaces_request_id() {
    let c = ring_cluster(2, 2, 20);
    let req = SampleRequest {
        targets: vec![1, 2, 3],
        timestamps: vec![500; 3],
        fanouts: vec![2, 2],
        policy: SamplingPolicy::recent(),
        seed: 1,
    };
    c.set_worker_failed(WorkerId::new(1, 0), true);
    let err = distributed_sample_khop(&c, &req, WorkerId::new(0, 0)).unwrap_err();
    assert!(err.request_id().is_some(), "{err}");
    assert!(err.to_string().contains("m1r0"));
    // other ranks are unaffected
    distributed_sample_khop(&c, &req, WorkerId::new(0, 1)).unwrap();
    c.set_worker_failed(WorkerId::new(1, 0), false);
    distributed_sample_khop(&c, &req, WorkerId::new(0, 0)).unwrap();
}
