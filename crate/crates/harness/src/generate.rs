//! Synthetic power-law edge streams.
//!
//! Endpoints are drawn independently with Chung-Lu style weights
//! `w(r) = (r + 1)^(-1 / (skew - 1))` over popularity ranks `r`, which gives a
//! degree distribution whose tail falls off like `k^-skew`. Ranks are mapped
//! to node ids through a seeded permutation so that popular nodes are spread
//! over the id space. With `drift > 0` the rank-to-id mapping rotates over
//! time, so the set of hot nodes moves as the stream progresses.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tgflow_core::graph::TemporalEdge;
use tgflow_core::{NodeId, Timestamp};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub nodes: u64,
    pub edges: usize,
    /// Target tail exponent of the degree distribution; must exceed 1.
    pub skew: f64,
    pub time_span: Timestamp,
    /// Fraction of the id space the popularity ranking rotates through over
    /// the whole time span.
    pub drift: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            nodes: 1_000,
            edges: 100_000,
            skew: 2.5,
            time_span: 1_000_000,
            drift: 0.0,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Invalid(m.to_string()));
        if self.nodes < 2 {
            return bad("a self-loop-free stream needs at least 2 nodes");
        }
        if self.edges == 0 {
            return bad("edges must be at least 1");
        }
        if !(self.skew > 1.0) || !self.skew.is_finite() {
            return bad("skew must be a finite number above 1");
        }
        if self.time_span < 1 {
            return bad("time_span must be at least 1");
        }
        if !(self.drift >= 0.0) {
            return bad("drift must be non-negative");
        }
        Ok(())
    }
}

/// Time-sorted, self-loop-free stream; identical for identical specs.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<Vec<TemporalEdge>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes as usize;
    let exponent = 1.0 / (spec.skew - 1.0);
    let weights: Vec<f64> = (0..n).map(|r| ((r + 1) as f64).powf(-exponent)).collect();
    let ranks = WeightedIndex::new(&weights).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let mut perm: Vec<NodeId> = (0..spec.nodes).collect();
    perm.shuffle(&mut rng);

    let mut times: Vec<Timestamp> = (0..spec.edges).map(|_| rng.gen_range(0..spec.time_span)).collect();
    times.sort_unstable();

    let id_at = |rank: usize, t: Timestamp| {
        let shift = (spec.drift * n as f64 * t as f64 / spec.time_span as f64) as usize;
        perm[(rank + shift) % n]
    };
    Ok(times
        .into_iter()
        .map(|t| {
            let src = ranks.sample(&mut rng);
            let mut dst = ranks.sample(&mut rng);
            while dst == src {
                dst = ranks.sample(&mut rng);
            }
            TemporalEdge::new(id_at(src, t), id_at(dst, t), t)
        })
        .collect())
}

/// Discrete power-law tail exponent by maximum likelihood over the values
/// `>= xmin`, using the usual `xmin - 1/2` continuity correction.
pub fn fit_tail_exponent(values: &[u64], xmin: u64) -> Option<f64> {
    if xmin == 0 {
        return None;
    }
    let base = xmin as f64 - 0.5;
    let (n, sum) = values
        .iter()
        .filter(|&&d| d >= xmin)
        .fold((0usize, 0.0f64), |(n, s), &d| (n + 1, s + (d as f64 / base).ln()));
    (n > 1 && sum > 0.0).then(|| 1.0 + n as f64 / sum)
}

/// Undirected degree of every node id below `nodes`.
pub fn degrees(edges: &[TemporalEdge], nodes: u64) -> Vec<u64> {
    let mut deg = vec![0u64; nodes as usize];
    for e in edges {
        deg[e.src as usize] += 1;
        deg[e.dst as usize] += 1;
    }
    deg
}
