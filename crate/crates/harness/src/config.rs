//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors. The `TG_SEED` environment variable overrides `seed`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tgflow_core::cache::CachePolicy;
use tgflow_core::graph::Directedness;
use tgflow_core::sampler::{PolicyKind, SamplingPolicy};
use tgflow_core::Timestamp;

use crate::error::{HarnessError, Result};
use crate::generate::GeneratorSpec;

pub const SEED_ENV: &str = "TG_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchPolicy {
    /// A new batch every `interval` time units.
    ByTime(Timestamp),
    /// A new batch every `n` edges.
    ByCount(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Csv(PathBuf),
    Synthetic(GeneratorSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub policy: CachePolicy,
    /// Capacity as a fraction of the distinct keys in the stream.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: Source,
    pub directedness: Directedness,
    pub initial_fraction: f64,
    pub batch: BatchPolicy,
    pub epochs: usize,
    pub replay_ratio: f64,
    pub minibatch_size: usize,
    pub fanouts: Vec<usize>,
    pub policy: SamplingPolicy,
    pub tau: usize,
    pub node_cache: CacheConfig,
    pub edge_cache: CacheConfig,
    pub lambda: f64,
    /// Restore the round-start cache snapshot at every epoch start.
    pub restore: bool,
    /// Keep cache contents from one round to the next.
    pub reuse: bool,
    /// Where round-end caches are persisted; kept in memory when unset.
    pub cache_dir: Option<PathBuf>,
    /// Mini-batches counted as the start of an epoch for hit-rate reporting.
    pub initial_window: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Node memory dimension; 0 disables memory fetch and writeback.
    pub memory_dim: usize,
    pub machines: usize,
    pub sampler_workers: usize,
    /// Simulated per-iteration compute, in microseconds.
    pub compute_sleep_us: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: Source::Synthetic(GeneratorSpec::default()),
            directedness: Directedness::Undirected,
            initial_fraction: 0.3,
            batch: BatchPolicy::ByCount(10_000),
            epochs: 3,
            replay_ratio: 0.0,
            minibatch_size: 600,
            fanouts: vec![10],
            policy: SamplingPolicy::recent(),
            tau: 48,
            node_cache: CacheConfig {
                policy: CachePolicy::Lru,
                fraction: 0.1,
            },
            edge_cache: CacheConfig {
                policy: CachePolicy::Lru,
                fraction: 0.1,
            },
            lambda: 0.5,
            restore: true,
            reuse: true,
            cache_dir: None,
            initial_window: 5,
            node_dim: 16,
            edge_dim: 16,
            memory_dim: 0,
            machines: 1,
            sampler_workers: 1,
            compute_sleep_us: 0,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?} for {key}"))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("cannot parse {v:?} for {key} as a boolean")),
    }
}

impl RunConfig {
    fn synthetic(&mut self) -> &mut GeneratorSpec {
        if !matches!(self.source, Source::Synthetic(_)) {
            self.source = Source::Synthetic(GeneratorSpec::default());
        }
        match &mut self.source {
            Source::Synthetic(g) => g,
            Source::Csv(_) => unreachable!(),
        }
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "dataset" => self.source = Source::Csv(PathBuf::from(v)),
            "nodes" => self.synthetic().nodes = parse(key, v)?,
            "edges" => self.synthetic().edges = parse(key, v)?,
            "skew" => self.synthetic().skew = parse(key, v)?,
            "time_span" => self.synthetic().time_span = parse(key, v)?,
            "drift" => self.synthetic().drift = parse(key, v)?,
            "directed" => {
                self.directedness = if parse_bool(key, v)? {
                    Directedness::Directed
                } else {
                    Directedness::Undirected
                }
            }
            "initial_fraction" => self.initial_fraction = parse(key, v)?,
            "batch" => {
                let (kind, n) = v
                    .split_once(':')
                    .ok_or_else(|| format!("batch must be count:N or time:T, got {v:?}"))?;
                self.batch = match kind {
                    "count" => BatchPolicy::ByCount(parse(key, n)?),
                    "time" => BatchPolicy::ByTime(parse(key, n)?),
                    _ => return Err(format!("unknown batch policy {kind:?}")),
                }
            }
            "epochs" => self.epochs = parse(key, v)?,
            "replay_ratio" => self.replay_ratio = parse(key, v)?,
            "minibatch_size" => self.minibatch_size = parse(key, v)?,
            "fanouts" => {
                self.fanouts = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "policy" => {
                self.policy.kind = match v {
                    "recent" => PolicyKind::Recent,
                    "uniform" => PolicyKind::Uniform,
                    "time_window" => PolicyKind::TimeWindow,
                    _ => return Err(format!("unknown sampling policy {v:?}")),
                }
            }
            "delta" => self.policy.delta = Some(parse(key, v)?),
            "tau" => self.tau = parse(key, v)?,
            "node_cache_policy" => self.node_cache.policy = v.parse().map_err(|e| format!("{e}"))?,
            "node_cache_fraction" => self.node_cache.fraction = parse(key, v)?,
            "edge_cache_policy" => self.edge_cache.policy = v.parse().map_err(|e| format!("{e}"))?,
            "edge_cache_fraction" => self.edge_cache.fraction = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "restore" => self.restore = parse_bool(key, v)?,
            "reuse" => self.reuse = parse_bool(key, v)?,
            "cache_dir" => self.cache_dir = Some(PathBuf::from(v)),
            "initial_window" => self.initial_window = parse(key, v)?,
            "node_dim" => self.node_dim = parse(key, v)?,
            "edge_dim" => self.edge_dim = parse(key, v)?,
            "memory_dim" => self.memory_dim = parse(key, v)?,
            "machines" => self.machines = parse(key, v)?,
            "sampler_workers" => self.sampler_workers = parse(key, v)?,
            "compute_sleep_us" => self.compute_sleep_us = parse(key, v)?,
            "seed" => {
                self.seed = parse(key, v)?;
                if let Source::Synthetic(g) = &mut self.source {
                    g.seed = self.seed;
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses a config text without consulting the environment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seed_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| HarnessError::Config { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            cfg.set(k, v).map_err(err)?;
            seed_set |= k == "seed";
        }
        // a generator configured after `seed` still follows it
        if let (true, Source::Synthetic(g)) = (seed_set, &mut cfg.source) {
            g.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `TG_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse_str(&std::fs::read_to_string(path)?)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.apply_seed_override(&v)?;
        }
        Ok(())
    }

    pub fn apply_seed_override(&mut self, v: &str) -> Result<()> {
        self.set("seed", v.trim())
            .map_err(|m| HarnessError::Invalid(format!("{SEED_ENV}: {m}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Invalid(m));
        if !(self.initial_fraction > 0.0 && self.initial_fraction < 1.0) {
            return bad(format!("initial_fraction must be in (0, 1), got {}", self.initial_fraction));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.replay_ratio) {
            return bad(format!("replay_ratio must be in [0, 1], got {}", self.replay_ratio));
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be at least 1".into());
        }
        match self.batch {
            BatchPolicy::ByCount(0) => return bad("batch count must be at least 1".into()),
            BatchPolicy::ByTime(t) if t <= 0 => return bad("batch interval must be positive".into()),
            _ => {}
        }
        for c in [self.node_cache, self.edge_cache] {
            if !(0.0..=1.0).contains(&c.fraction) {
                return bad(format!("cache fraction must be in [0, 1], got {}", c.fraction));
            }
        }
        if self.machines == 0 {
            return bad("machines must be at least 1".into());
        }
        if let Source::Synthetic(g) = &self.source {
            g.validate()?;
        }
        self.policy.validate().map_err(|e| HarnessError::Invalid(e.to_string()))?;
        if self.fanouts.contains(&0) {
            return bad("fanouts must be at least 1".into());
        }
        if self.tau == 0 {
            return bad("tau must be at least 1".into());
        }
        Ok(())
    }
}
