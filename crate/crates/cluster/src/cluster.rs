use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard};
use std::thread::{self, JoinHandle};

use crossbeam_channel::unbounded;
use tgflow_core::features::{EdgeFeatureTable, FeatureRows, NodeFeatureTable, NodeMemoryTable};
use tgflow_core::graph::{BlockSizing, Directedness, DynamicGraph, IngestOutcome, TemporalEdge};
use tgflow_core::partition::{BalanceStats, Dispatcher};
use tgflow_core::sampler::{khop_driver, Candidate, LayeredSample, SampleLayer, SampleRequest, SamplingPolicy};
use tgflow_core::{EdgeId, NodeId, Timestamp};

use crate::error::{ClusterError, Result};
use crate::spec::{route, ClusterSpec, WorkerId};
use crate::transport::{InProcess, Tcp, Transport, TransportKind};
use crate::wire::{FeatureKind, FeatureRequest, Frame, Message, RemoteSampleRequest, SampleResponse};
use crate::worker::{self, from_response, MachineStore, WorkerShared, WorkerTelemetry};

#[derive(Clone, Copy, Debug)]
pub struct ClusterConfig {
    pub spec: ClusterSpec,
    pub directedness: Directedness,
    pub sizing: BlockSizing,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub memory_dim: usize,
    pub transport: TransportKind,
}

impl ClusterConfig {
    pub fn new(spec: ClusterSpec, directedness: Directedness) -> Self {
        Self {
            spec,
            directedness,
            sizing: BlockSizing::Adaptive { threshold: 64 },
            node_dim: 0,
            edge_dim: 0,
            memory_dim: 0,
            transport: TransportKind::InProcess,
        }
    }
}

struct WorkerHandle {
    shared: Arc<WorkerShared>,
    join: Option<JoinHandle<()>>,
}

/// Machines holding graph partitions, each served by a fixed set of ranked
/// workers.
///
/// Mutations take `&mut self` and are applied to every partition before the
/// call returns; sampling and feature fetches take `&self` and may run from
/// many trainer threads at once.
pub struct Cluster {
    config: ClusterConfig,
    dispatcher: Dispatcher,
    stores: Vec<Arc<RwLock<MachineStore>>>,
    workers: Vec<WorkerHandle>,
    transport: Option<Box<dyn Transport>>,
    next_request: AtomicU64,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Result<Self> {
        let spec = config.spec;
        config.sizing.validate()?;
        let stores: Vec<Arc<RwLock<MachineStore>>> = (0..spec.machines)
            .map(|_| {
                Ok(Arc::new(RwLock::new(MachineStore {
                    graph: DynamicGraph::with_sizing(Directedness::Directed, config.sizing)?,
                    node_features: NodeFeatureTable::new(config.node_dim),
                    edge_features: EdgeFeatureTable::new(config.edge_dim),
                    memory: NodeMemoryTable::new(config.memory_dim),
                })))
            })
            .collect::<Result<_>>()?;

        let mut workers = Vec::new();
        let mut queues = Vec::new();
        for w in spec.workers() {
            let (tx, rx) = unbounded();
            let shared = Arc::new(WorkerShared::new(w));
            let store = Arc::clone(&stores[w.machine]);
            let s = Arc::clone(&shared);
            let join = thread::Builder::new()
                .name(format!("worker-{w}"))
                .spawn(move || worker::run(w, spec, store, s, rx))?;
            queues.push(tx);
            workers.push(WorkerHandle {
                shared,
                join: Some(join),
            });
        }
        let transport: Box<dyn Transport> = match config.transport {
            TransportKind::InProcess => Box::new(InProcess::new(spec, queues)),
            TransportKind::Tcp => Box::new(Tcp::start(spec, queues)?),
        };
        Ok(Self {
            config,
            dispatcher: Dispatcher::new(spec.partition, config.directedness),
            stores,
            workers,
            transport: Some(transport),
            next_request: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &ClusterSpec {
        &self.config.spec
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn transport_kind(&self) -> TransportKind {
        self.transport().kind()
    }

    fn transport(&self) -> &dyn Transport {
        self.transport.as_deref().expect("transport lives until drop")
    }

    /// Read access to one machine's partition.
    pub fn store(&self, machine: usize) -> RwLockReadGuard<'_, MachineStore> {
        self.stores[machine].read().expect("store lock")
    }

    /// Routes a batch to the owning partitions. Edge feature rows, if given,
    /// follow their edges. Returns what an unpartitioned graph would report.
    pub fn ingest(&mut self, edges: &[TemporalEdge], edge_rows: Option<&[f32]>) -> Result<IngestOutcome> {
        let dim = self.config.edge_dim;
        if let Some(rows) = edge_rows {
            if rows.len() != edges.len() * dim {
                return Err(tgflow_core::Error::Shape(format!(
                    "{} edges need {} feature values, got {}",
                    edges.len(),
                    edges.len() * dim,
                    rows.len()
                ))
                .into());
            }
        }
        let d = self.dispatcher.dispatch(edges);
        let rejected: HashSet<usize> = d.outcome.rejected.iter().map(|r| r.index).collect();
        let accepted: Vec<usize> = (0..edges.len()).filter(|i| !rejected.contains(i)).collect();
        let first_id = d.outcome.edge_ids.first().copied().unwrap_or(0);

        for (store, part) in self.stores.iter().zip(&d.parts) {
            let mut s = store.write().expect("store lock");
            let out = s.graph.add_edges_with_ids(&part.edges, &part.edge_ids)?;
            debug_assert!(out.rejected.is_empty(), "dispatcher and replica disagree");
            if let Some(rows) = edge_rows {
                let mut ids: Vec<EdgeId> = part.edge_ids.clone();
                ids.dedup();
                let mut data = Vec::with_capacity(ids.len() * dim);
                for id in &ids {
                    let src = accepted[(id - first_id) as usize];
                    data.extend_from_slice(&rows[src * dim..(src + 1) * dim]);
                }
                s.edge_features.append_edge_features(&ids, &data)?;
            }
        }
        Ok(d.outcome)
    }

    /// Deletes edges on every partition; returns how many were live.
    pub fn delete_edges(&mut self, ids: &[EdgeId]) -> usize {
        let mut deleted = 0;
        for id in ids {
            let mut any = false;
            for store in &self.stores {
                any |= store.write().expect("store lock").graph.delete_edges(&[*id]) > 0;
            }
            deleted += any as usize;
        }
        deleted
    }

    /// Deletes a node everywhere, so no partition samples it as a neighbor.
    pub fn delete_node(&mut self, v: NodeId) -> bool {
        if !self.dispatcher.delete_node(v) {
            return false;
        }
        for store in &self.stores {
            store.write().expect("store lock").graph.delete_node(v);
        }
        true
    }

    pub fn set_node_features(&mut self, ids: &[NodeId], rows: &[f32]) -> Result<()> {
        let dim = self.config.node_dim;
        for (m, (ids, rows)) in self.split_rows(ids, rows, dim)? {
            self.stores[m].write().expect("store lock").node_features.upsert(&ids, &rows)?;
        }
        Ok(())
    }

    pub fn update_memory(&mut self, ids: &[NodeId], rows: &[f32], timestamps: &[Timestamp]) -> Result<()> {
        let dim = self.config.memory_dim;
        if timestamps.len() != ids.len() {
            return Err(tgflow_core::Error::Shape(format!("{} ids but {} timestamps", ids.len(), timestamps.len())).into());
        }
        let groups = self.group_by_owner(ids);
        for (m, idx) in groups {
            let sub_ids: Vec<NodeId> = idx.iter().map(|&i| ids[i]).collect();
            let sub_ts: Vec<Timestamp> = idx.iter().map(|&i| timestamps[i]).collect();
            let sub_rows: Vec<f32> = idx.iter().flat_map(|&i| rows[i * dim..(i + 1) * dim].iter().copied()).collect();
            self.stores[m].write().expect("store lock").memory.update_memory(&sub_ids, &sub_rows, &sub_ts)?;
        }
        Ok(())
    }

    fn split_rows(&self, ids: &[NodeId], rows: &[f32], dim: usize) -> Result<BTreeMap<usize, (Vec<NodeId>, Vec<f32>)>> {
        if rows.len() != ids.len() * dim {
            return Err(tgflow_core::Error::Shape(format!(
                "{} ids need {} values at dim {dim}, got {}",
                ids.len(),
                ids.len() * dim,
                rows.len()
            ))
            .into());
        }
        let mut out: BTreeMap<usize, (Vec<NodeId>, Vec<f32>)> = BTreeMap::new();
        for (i, &v) in ids.iter().enumerate() {
            let e = out.entry(self.config.spec.owner(v)).or_default();
            e.0.push(v);
            e.1.extend_from_slice(&rows[i * dim..(i + 1) * dim]);
        }
        Ok(out)
    }

    /// Positions of `ids` grouped by owning machine.
    fn group_by_owner(&self, ids: &[NodeId]) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &v) in ids.iter().enumerate() {
            groups.entry(self.config.spec.owner(v)).or_default().push(i);
        }
        groups
    }

    fn request_id(&self) -> u64 {
        self.next_request.fetch_add(1, Ordering::Relaxed)
    }

    /// Sends one frame per destination and returns the replies in order,
    /// turning worker-side errors into [`ClusterError::Remote`].
    fn call(&self, calls: Vec<(WorkerId, Frame)>) -> Result<Vec<Message>> {
        let meta: Vec<(WorkerId, u64)> = calls.iter().map(|(w, f)| (*w, f.request_id)).collect();
        let replies = self.transport().exchange(calls);
        meta.into_iter()
            .zip(replies)
            .map(|((worker, request_id), reply)| {
                let frame = reply.map_err(|e| ClusterError::Remote {
                    request_id,
                    worker,
                    message: e.to_string(),
                })?;
                if frame.request_id != request_id {
                    return Err(ClusterError::Protocol(format!(
                        "reply for request {} while waiting for {request_id}",
                        frame.request_id
                    )));
                }
                match frame.message {
                    Message::Error(message) => Err(ClusterError::Remote {
                        request_id,
                        worker,
                        message,
                    }),
                    m => Ok(m),
                }
            })
            .collect()
    }

    /// One hop: every source is sampled by the owner machine's worker of the
    /// requester's rank, one message per owner.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_hop(
        &self,
        origin: WorkerId,
        sources: &[NodeId],
        t_starts: &[Timestamp],
        t_ends: &[Timestamp],
        fanout: usize,
        policy: SamplingPolicy,
        seed: u64,
    ) -> Result<SampleLayer> {
        let groups = self.group_by_owner(sources);
        let calls: Vec<(WorkerId, Frame)> = groups
            .values()
            .map(|idx| {
                let req = RemoteSampleRequest {
                    origin,
                    targets: idx.iter().map(|&i| sources[i]).collect(),
                    timestamps: idx.iter().map(|&i| t_ends[i]).collect(),
                    t_starts: idx.iter().map(|&i| t_starts[i]).collect(),
                    fanout: fanout as u32,
                    policy: policy.kind,
                    delta: policy.delta.unwrap_or(0),
                    seed,
                };
                let dest = route(&self.config.spec, origin, req.targets[0]);
                (
                    dest,
                    Frame {
                        request_id: self.request_id(),
                        message: Message::SampleRequest(req),
                    },
                )
            })
            .collect();

        let mut picked: Vec<Vec<Candidate>> = vec![Vec::new(); sources.len()];
        for (idx, reply) in groups.values().zip(self.call(calls)?) {
            let Message::SampleResponse(r) = reply else {
                return Err(ClusterError::Protocol(format!("expected a sample response, got {:?}", reply.msg_type())));
            };
            check_response(&r, idx.len())?;
            for (k, &i) in idx.iter().enumerate() {
                picked[i] = (r.offsets[k] as usize..r.offsets[k + 1] as usize)
                    .map(|j| Candidate {
                        neighbor: r.neighbors[j],
                        edge_id: r.edge_ids[j],
                        timestamp: r.timestamps[j],
                    })
                    .collect();
            }
        }

        let mut layer = SampleLayer {
            sources: sources.iter().copied().zip(t_ends.iter().copied()).collect(),
            offsets: vec![0],
            ..Default::default()
        };
        for p in &picked {
            layer.push_source(p);
        }
        Ok(layer)
    }

    fn fetch(&self, origin: WorkerId, kind: FeatureKind, groups: BTreeMap<usize, Vec<usize>>, ids: &[u64], dim: usize) -> Result<FeatureRows> {
        let calls: Vec<(WorkerId, Frame)> = groups
            .iter()
            .map(|(&m, idx)| {
                let req = FeatureRequest {
                    origin,
                    kind,
                    ids: idx.iter().map(|&i| ids[i]).collect(),
                };
                let dest = WorkerId::new(m, origin.rank);
                let frame = Frame {
                    request_id: self.request_id(),
                    message: Message::FeatureRequest(req),
                };
                (dest, frame)
            })
            .collect();
        let mut out = FeatureRows {
            dim,
            data: vec![0.0; ids.len() * dim],
            found: vec![false; ids.len()],
        };
        for (idx, reply) in groups.values().zip(self.call(calls)?) {
            let Message::FeatureResponse(r) = reply else {
                return Err(ClusterError::Protocol(format!("expected a feature response, got {:?}", reply.msg_type())));
            };
            let rows = from_response(r);
            if rows.dim != dim || rows.len() != idx.len() || rows.data.len() != idx.len() * dim {
                return Err(ClusterError::Protocol("feature response shape mismatch".into()));
            }
            for (k, &i) in idx.iter().enumerate() {
                out.found[i] = rows.found[k];
                out.data[i * dim..(i + 1) * dim].copy_from_slice(rows.row(k));
            }
        }
        Ok(out)
    }

    /// Node features fetched from the owning machines.
    pub fn fetch_node_features(&self, origin: WorkerId, ids: &[NodeId]) -> Result<FeatureRows> {
        self.fetch(origin, FeatureKind::Node, self.group_by_owner(ids), ids, self.config.node_dim)
    }

    pub fn fetch_memory(&self, origin: WorkerId, ids: &[NodeId]) -> Result<FeatureRows> {
        self.fetch(origin, FeatureKind::Memory, self.group_by_owner(ids), ids, self.config.memory_dim)
    }

    /// Edge features, each looked up on the machine owning `owners[i]`, the
    /// node the edge was sampled from.
    pub fn fetch_edge_features(&self, origin: WorkerId, owners: &[NodeId], ids: &[EdgeId]) -> Result<FeatureRows> {
        if owners.len() != ids.len() {
            return Err(tgflow_core::Error::Shape(format!("{} owners but {} ids", owners.len(), ids.len())).into());
        }
        self.fetch(origin, FeatureKind::Edge, self.group_by_owner(owners), ids, self.config.edge_dim)
    }

    pub fn telemetry(&self) -> Vec<WorkerTelemetry> {
        self.workers
            .iter()
            .map(|w| *w.shared.telemetry.lock().expect("telemetry lock"))
            .collect()
    }

    pub fn reset_telemetry(&self) {
        for w in &self.workers {
            let mut t = w.shared.telemetry.lock().expect("telemetry lock");
            *t = WorkerTelemetry {
                worker: t.worker,
                ..Default::default()
            };
        }
    }

    /// Makes `worker` answer every request with an error until cleared.
    pub fn set_worker_failed(&self, worker: WorkerId, failed: bool) {
        self.workers[self.config.spec.index(worker)]
            .shared
            .fail
            .store(failed, Ordering::SeqCst);
    }

    /// Node and stored half-edge counts per machine.
    pub fn balance_stats(&self) -> BalanceStats {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for store in &self.stores {
            let s = store.read().expect("store lock");
            let g = &s.graph;
            nodes.push((0..g.num_nodes() as NodeId).filter(|&v| g.node(v).is_some_and(|n| n.num_blocks > 0)).count() as u64);
            edges.push(g.storage_stats().written_slots);
        }
        BalanceStats::from_counts(nodes, edges)
    }
}

fn check_response(r: &SampleResponse, sources: usize) -> Result<()> {
    let n = r.neighbors.len();
    let ok = r.offsets.len() == sources + 1
        && r.offsets.first() == Some(&0)
        && r.offsets.last() == Some(&(n as u32))
        && r.offsets.windows(2).all(|w| w[0] <= w[1])
        && r.edge_ids.len() == n
        && r.timestamps.len() == n;
    if ok {
        Ok(())
    } else {
        Err(ClusterError::Protocol("sample response shape mismatch".into()))
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        // closing the transport drops the queue senders, ending the workers
        self.transport.take();
        for w in &mut self.workers {
            if let Some(j) = w.join.take() {
                let _ = j.join();
            }
        }
    }
}

/// k-hop sampling issued by the trainer at `origin`. Every hop starts again
/// at the requester, which regroups the frontier by owner machine.
pub fn distributed_sample_khop(cluster: &Cluster, req: &SampleRequest, origin: WorkerId) -> Result<LayeredSample> {
    let spec = cluster.spec();
    if origin.machine >= spec.machines || origin.rank >= spec.workers_per_machine {
        return Err(tgflow_core::Error::Argument(format!("no worker {origin} in this cluster")).into());
    }
    let mut failure = None;
    let out = khop_driver(req, |_, nodes, starts, ends, fanout, seed| {
        cluster
            .sample_hop(origin, nodes, starts, ends, fanout, req.policy, seed)
            .map_err(|e| {
                let msg = e.to_string();
                failure = Some(e);
                tgflow_core::Error::Argument(msg)
            })
    });
    match (out, failure) {
        (_, Some(e)) => Err(e),
        (r, None) => Ok(r?),
    }
}
