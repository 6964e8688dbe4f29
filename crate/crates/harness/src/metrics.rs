use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// `|A ∩ B| / |A ∪ B|`, defined as 0 when both sets are empty.
pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    PowerLaw,
    Exponential,
    /// Every nonzero count is equal, so neither fit is meaningful.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessDistribution {
    /// Nonzero access counts in decreasing order; index `i` is rank `i + 1`.
    pub histogram: Vec<u64>,
    /// R² of `ln(count)` against `ln(rank)`.
    pub powerlaw_r2: f64,
    /// R² of `ln(count)` against `rank`.
    pub exponential_r2: f64,
    pub shape: Shape,
}

impl AccessDistribution {
    /// Compact form without the histogram.
    pub fn summary(&self) -> DistributionSummary {
        DistributionSummary {
            distinct: self.histogram.len(),
            total: self.histogram.iter().sum(),
            powerlaw_r2: self.powerlaw_r2,
            exponential_r2: self.exponential_r2,
            shape: self.shape,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub distinct: usize,
    pub total: u64,
    pub powerlaw_r2: f64,
    pub exponential_r2: f64,
    pub shape: Shape,
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
/// `None` when `y` or `x` has no variance.
fn r_squared(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx <= 0.0 || syy <= f64::EPSILON * my.abs().max(1.0) {
        return None;
    }
    Some((sxy * sxy) / (sxx * syy))
}

/// Rank-frequency view of access counts with power-law and exponential fits.
pub fn access_distribution(counts: &[u64]) -> Result<AccessDistribution> {
    let mut histogram: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if histogram.is_empty() {
        return Err(HarnessError::Metric("no nonzero access counts to fit".into()));
    }
    histogram.sort_unstable_by(|a, b| b.cmp(a));
    let ln_y: Vec<f64> = histogram.iter().map(|&c| (c as f64).ln()).collect();
    let rank: Vec<f64> = (1..=histogram.len()).map(|r| r as f64).collect();
    let ln_rank: Vec<f64> = rank.iter().map(|r| r.ln()).collect();
    let (pl, ex) = (r_squared(&ln_rank, &ln_y), r_squared(&rank, &ln_y));
    let (powerlaw_r2, exponential_r2, shape) = match (pl, ex) {
        (Some(p), Some(e)) => (p, e, if p >= e { Shape::PowerLaw } else { Shape::Exponential }),
        _ => (0.0, 0.0, Shape::Degenerate),
    };
    Ok(AccessDistribution {
        histogram,
        powerlaw_r2,
        exponential_r2,
        shape,
    })
}
