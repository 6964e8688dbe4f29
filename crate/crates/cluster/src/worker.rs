//! Worker actors. Each worker owns an inbound queue and serves requests one
//! at a time against its machine's partition.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use tgflow_core::features::{EdgeFeatureTable, FeatureRows, NodeFeatureTable, NodeMemoryTable};
use tgflow_core::graph::DynamicGraph;
use tgflow_core::partition::coefficient_of_variation;
use tgflow_core::sampler::Sampler;

use crate::spec::{ClusterSpec, WorkerId};
use crate::wire::{FeatureKind, FeatureResponse, Frame, Message, RemoteSampleRequest, SampleResponse};

/// Everything a machine stores: its graph partition and the features of the
/// nodes and edges it owns.
#[derive(Debug)]
pub struct MachineStore {
    pub graph: DynamicGraph,
    pub node_features: NodeFeatureTable,
    pub edge_features: EdgeFeatureTable,
    pub memory: NodeMemoryTable,
}

pub(crate) struct Envelope {
    pub frame: Frame,
    pub reply: Sender<Frame>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkerTelemetry {
    pub worker: WorkerId,
    /// Sampling requests served.
    pub requests_served: u64,
    pub targets_sampled: u64,
    pub feature_requests: u64,
    /// Requests whose origin rank differed from this worker's rank.
    pub rank_violations: u64,
    /// Wall time spent inside sampling calls.
    pub busy_time: Duration,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CvReport {
    pub busy_time_cv: f64,
    pub requests_cv: f64,
}

/// Coefficients of variation of busy time and served requests over `workers`.
pub fn measure_cv(workers: &[WorkerTelemetry]) -> CvReport {
    let busy: Vec<f64> = workers.iter().map(|w| w.busy_time.as_secs_f64()).collect();
    let served: Vec<f64> = workers.iter().map(|w| w.requests_served as f64).collect();
    CvReport {
        busy_time_cv: coefficient_of_variation(&busy),
        requests_cv: coefficient_of_variation(&served),
    }
}

/// [`measure_cv`] over the workers sharing each rank, indexed by rank.
pub fn per_rank_cv(spec: &ClusterSpec, workers: &[WorkerTelemetry]) -> Vec<CvReport> {
    (0..spec.workers_per_machine)
        .map(|r| {
            let same: Vec<WorkerTelemetry> = workers.iter().filter(|w| w.worker.rank == r).copied().collect();
            measure_cv(&same)
        })
        .collect()
}

pub(crate) struct WorkerShared {
    pub telemetry: Mutex<WorkerTelemetry>,
    pub fail: AtomicBool,
}

impl WorkerShared {
    pub fn new(worker: WorkerId) -> Self {
        Self {
            telemetry: Mutex::new(WorkerTelemetry {
                worker,
                ..Default::default()
            }),
            fail: AtomicBool::new(false),
        }
    }
}

pub(crate) fn run(
    id: WorkerId,
    spec: ClusterSpec,
    store: Arc<RwLock<MachineStore>>,
    shared: Arc<WorkerShared>,
    inbox: Receiver<Envelope>,
) {
    log::debug!("worker {id} started");
    let sampler = Sampler::default();
    for env in inbox {
        let request_id = env.frame.request_id;
        let message = if shared.fail.load(Ordering::SeqCst) {
            Message::Error(format!("worker {id} unavailable (simulated failure)"))
        } else {
            handle(id, &spec, &store, &shared, &sampler, env.frame.message)
        };
        // the requester may have given up; nothing to do then
        let _ = env.reply.send(Frame { request_id, message });
    }
    log::debug!("worker {id} stopped");
}

fn handle(
    id: WorkerId,
    spec: &ClusterSpec,
    store: &RwLock<MachineStore>,
    shared: &WorkerShared,
    sampler: &Sampler,
    msg: Message,
) -> Message {
    match msg {
        Message::SampleRequest(req) => {
            if let Some(v) = req.targets.iter().find(|&&v| spec.owner(v) != id.machine) {
                return Message::Error(format!("node {v} is not owned by machine {}", id.machine));
            }
            let foreign_rank = req.origin.rank != id.rank;
            let started = Instant::now();
            let result = sample(store, sampler, &req);
            let elapsed = started.elapsed();
            let mut t = shared.telemetry.lock().expect("telemetry lock");
            t.requests_served += 1;
            t.targets_sampled += req.targets.len() as u64;
            t.busy_time += elapsed;
            t.rank_violations += foreign_rank as u64;
            match result {
                Ok(r) => Message::SampleResponse(r),
                Err(e) => Message::Error(e.to_string()),
            }
        }
        Message::FeatureRequest(req) => {
            if req.kind != FeatureKind::Edge {
                if let Some(v) = req.ids.iter().find(|&&v| spec.owner(v) != id.machine) {
                    return Message::Error(format!("node {v} is not owned by machine {}", id.machine));
                }
            }
            let mut t = shared.telemetry.lock().expect("telemetry lock");
            t.feature_requests += 1;
            t.rank_violations += (req.origin.rank != id.rank) as u64;
            drop(t);
            let s = store.read().expect("store lock");
            let rows = match req.kind {
                FeatureKind::Node => s.node_features.get_node_features(&req.ids),
                FeatureKind::Edge => s.edge_features.get_edge_features(&req.ids),
                FeatureKind::Memory => s.memory.get_memory(&req.ids),
            };
            Message::FeatureResponse(to_response(rows))
        }
        other => Message::Error(format!("worker cannot serve {:?}", other.msg_type())),
    }
}

fn sample(store: &RwLock<MachineStore>, sampler: &Sampler, req: &RemoteSampleRequest) -> tgflow_core::Result<SampleResponse> {
    let s = store.read().expect("store lock");
    let layer = sampler.sample_layer(
        &s.graph,
        &req.targets,
        &req.t_starts,
        &req.timestamps,
        req.fanout as usize,
        req.policy,
        req.seed,
    )?;
    Ok(SampleResponse {
        offsets: layer.offsets.iter().map(|&o| o as u32).collect(),
        neighbors: layer.neighbors,
        edge_ids: layer.edge_ids,
        timestamps: layer.edge_timestamps,
    })
}

fn to_response(rows: FeatureRows) -> FeatureResponse {
    FeatureResponse {
        dim: rows.dim as u32,
        found: rows.found,
        data: rows.data,
    }
}

pub(crate) fn from_response(r: FeatureResponse) -> FeatureRows {
    FeatureRows {
        dim: r.dim as usize,
        data: r.data,
        found: r.found,
    }
}
