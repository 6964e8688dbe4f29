//! Block-sizing ablation: build the same stream under each sizing policy and
//! compare list lengths and edge-data memory against a static array.
//!
//! The adaptive threshold and the fixed block size are grid-searched under a
//! shared edge-data overhead budget; the chosen setting is the one with the
//! shortest average list whose overhead stays within budget.

use serde::{Deserialize, Serialize};
use tgflow_core::graph::{BlockSizing, Directedness, DynamicGraph, InsertionBatch, StorageStats, TemporalEdge};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub directedness: Directedness,
    /// Edges per ingestion call.
    pub batch_size: usize,
    /// Largest tolerated edge-data overhead relative to a static array.
    pub budget: f64,
    pub tau_grid: Vec<usize>,
    pub fixed_grid: Vec<usize>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        let grid: Vec<usize> = (0..=13).map(|i| 1 << i).collect();
        Self {
            directedness: Directedness::Undirected,
            batch_size: 1_000,
            budget: 0.05,
            tau_grid: grid.clone(),
            fixed_grid: grid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sizing: BlockSizing,
    pub policy: String,
    pub avg_list_len: f64,
    pub max_list_len: usize,
    pub edge_data_overhead: f64,
    pub edge_data_bytes: u64,
    pub metadata_bytes: u64,
    pub wasted_slots: u64,
    pub within_waste_bound: bool,
}

impl AblationRow {
    fn new(sizing: BlockSizing, s: StorageStats) -> Self {
        Self {
            sizing,
            policy: sizing.name().to_string(),
            avg_list_len: s.avg_list_len,
            max_list_len: s.max_list_len,
            edge_data_overhead: s.edge_data_overhead(),
            edge_data_bytes: s.edge_data_bytes,
            metadata_bytes: s.metadata_bytes,
            wasted_slots: s.wasted_slots,
            within_waste_bound: s.within_waste_bound(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub adaptive: AblationRow,
    pub fixed: AblationRow,
    pub strawman: AblationRow,
    pub adjacency_list: AblationRow,
    /// Edge-data bytes of the static adjacency array.
    pub static_edge_bytes: u64,
    /// Every grid point tried, adaptive first.
    pub grid: Vec<AblationRow>,
}

/// Ingests `edges` in chunks of `batch_size` under `sizing`.
pub fn build(edges: &[TemporalEdge], directedness: Directedness, sizing: BlockSizing, batch_size: usize) -> Result<DynamicGraph> {
    let mut g = DynamicGraph::with_sizing(directedness, sizing)?;
    for chunk in edges.chunks(batch_size.max(1)) {
        g.add_edges(&InsertionBatch::new(chunk.to_vec()));
    }
    Ok(g)
}

fn measure(edges: &[TemporalEdge], spec: &AblationSpec, sizing: BlockSizing) -> Result<AblationRow> {
    let g = build(edges, spec.directedness, sizing, spec.batch_size)?;
    let s = g.storage_stats();
    if !s.within_waste_bound() {
        log::warn!("{}: {} wasted of {} written slots", sizing.name(), s.wasted_slots, s.written_slots);
    }
    Ok(AblationRow::new(sizing, s))
}

/// Shortest average list within budget; the lowest-overhead point otherwise.
fn pick(rows: &[AblationRow], budget: f64) -> AblationRow {
    let within = rows
        .iter()
        .filter(|r| r.edge_data_overhead <= budget)
        .min_by(|a, b| a.avg_list_len.total_cmp(&b.avg_list_len));
    within
        .or_else(|| rows.iter().min_by(|a, b| a.edge_data_overhead.total_cmp(&b.edge_data_overhead)))
        .expect("non-empty grid")
        .clone()
}

pub fn run_ablation(edges: &[TemporalEdge], spec: &AblationSpec) -> Result<AblationReport> {
    let mut grid = Vec::new();
    let adaptive: Vec<AblationRow> = spec
        .tau_grid
        .iter()
        .map(|&t| measure(edges, spec, BlockSizing::Adaptive { threshold: t }))
        .collect::<Result<_>>()?;
    let fixed: Vec<AblationRow> = spec
        .fixed_grid
        .iter()
        .map(|&s| measure(edges, spec, BlockSizing::Fixed { size: s }))
        .collect::<Result<_>>()?;
    let strawman = measure(edges, spec, BlockSizing::PerBatch)?;
    let adjacency_list = measure(edges, spec, BlockSizing::AdjacencyList)?;
    let static_edge_bytes = adjacency_list.edge_data_bytes;
    let report = AblationReport {
        adaptive: pick(&adaptive, spec.budget),
        fixed: pick(&fixed, spec.budget),
        strawman,
        adjacency_list,
        static_edge_bytes,
        grid: Vec::new(),
    };
    grid.extend(adaptive);
    grid.extend(fixed);
    Ok(AblationReport { grid, ..report })
}
