//! Batch-vectorized dynamic feature caches.
//!
//! A cache is a fixed array of slots plus one score per slot. Lookups and
//! updates work on whole batches of keys:
//!
//! - LRU keeps a recency score. Every fetch decrements all scores once, then
//!   resets the score of each hit entry to 0, so the least recently used
//!   entries carry the lowest scores.
//! - LFU keeps an access count, incremented by each hit occurrence.
//! - FIFO is a ring buffer; an insert of `n` keys overwrites the `n` slots
//!   starting at `fifo_head` and advances it.
//!
//! Victims for LRU/LFU are the lowest-score slots, picked with a top-k
//! selection (ties go to the lower slot index). Each insert call replaces at
//! most `floor(lambda * capacity)` slots.

use std::collections::{HashMap, HashSet};
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::codec::{eof_as_format, read_header, write_header};
use crate::error::{Error, Result};

pub type CacheKey = u64;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"TGCS";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    Lru,
    Lfu,
    Fifo,
}

impl CachePolicy {
    fn code(self) -> u8 {
        match self {
            CachePolicy::Lru => 0,
            CachePolicy::Lfu => 1,
            CachePolicy::Fifo => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(CachePolicy::Lru),
            1 => Some(CachePolicy::Lfu),
            2 => Some(CachePolicy::Fifo),
            _ => None,
        }
    }
}

impl std::str::FromStr for CachePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lru" => Ok(CachePolicy::Lru),
            "lfu" => Ok(CachePolicy::Lfu),
            "fifo" => Ok(CachePolicy::Fifo),
            _ => Err(Error::Config(format!("unknown cache policy {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    pub evictions: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FetchResult {
    /// Row-major `[keys.len() x dim]`; rows of misses are zero.
    pub values: Vec<f32>,
    pub hit_mask: Vec<bool>,
    /// Distinct missed keys in first-occurrence order.
    pub miss_keys: Vec<CacheKey>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InsertOutcome {
    pub inserted: usize,
    /// Keys evicted to make room, in victim order.
    pub evicted: Vec<CacheKey>,
}

/// Frozen copy of a cache's contents.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheSnapshot {
    pub policy: CachePolicy,
    pub capacity: usize,
    pub dim: usize,
    pub lambda: f64,
    pub keys: Vec<Option<CacheKey>>,
    pub scores: Vec<i64>,
    pub fifo_head: usize,
    pub storage: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct VectorCache {
    policy: CachePolicy,
    capacity: usize,
    dim: usize,
    lambda: f64,
    keys: Vec<Option<CacheKey>>,
    slot_of: HashMap<CacheKey, usize>,
    scores: Vec<i64>,
    fifo_head: usize,
    storage: Vec<f32>,
    hits: u64,
    misses: u64,
    evictions: u64,
}

fn replace_limit(lambda: f64, capacity: usize) -> usize {
    // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
    ((lambda * capacity as f64) + 1e-9).floor() as usize
}

impl VectorCache {
    pub fn new(policy: CachePolicy, capacity: usize, dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Config(format!("lambda must be in (0, 1], got {lambda}")));
        }
        if capacity > 0 && replace_limit(lambda, capacity) == 0 {
            return Err(Error::Config(format!(
                "lambda {lambda} allows no replacement in a cache of {capacity} slots"
            )));
        }
        Ok(Self {
            policy,
            capacity,
            dim,
            lambda,
            keys: vec![None; capacity],
            slot_of: HashMap::with_capacity(capacity),
            scores: vec![0; capacity],
            fifo_head: 0,
            storage: vec![0.0; capacity * dim],
            hits: 0,
            misses: 0,
            evictions: 0,
        })
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.slot_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_of.is_empty()
    }

    pub fn contains(&self, key: CacheKey) -> bool {
        self.slot_of.contains_key(&key)
    }

    /// Maximum number of slots one insert call may fill.
    pub fn replace_limit(&self) -> usize {
        replace_limit(self.lambda, self.capacity)
    }

    pub fn scores(&self) -> &[i64] {
        &self.scores
    }

    pub fn keys(&self) -> &[Option<CacheKey>] {
        &self.keys
    }

    pub fn fifo_head(&self) -> usize {
        self.fifo_head
    }

    /// Looks up a batch and applies one score update for the whole batch.
    pub fn fetch(&mut self, keys: &[CacheKey]) -> FetchResult {
        let dim = self.dim;
        let mut values = vec![0.0; keys.len() * dim];
        let mut hit_mask = Vec::with_capacity(keys.len());
        let mut miss_keys = Vec::new();
        let mut seen_miss = HashSet::new();
        let mut hit_slots = Vec::new();

        for (i, k) in keys.iter().enumerate() {
            match self.slot_of.get(k) {
                Some(&s) => {
                    values[i * dim..(i + 1) * dim]
                        .copy_from_slice(&self.storage[s * dim..(s + 1) * dim]);
                    hit_mask.push(true);
                    hit_slots.push(s);
                }
                None => {
                    hit_mask.push(false);
                    if seen_miss.insert(*k) {
                        miss_keys.push(*k);
                    }
                }
            }
        }
        self.hits += hit_slots.len() as u64;
        self.misses += (keys.len() - hit_slots.len()) as u64;

        match self.policy {
            CachePolicy::Lru if !keys.is_empty() => {
                for s in self.scores.iter_mut() {
                    *s -= 1;
                }
                for &s in &hit_slots {
                    self.scores[s] = 0;
                }
            }
            CachePolicy::Lfu => {
                for &s in &hit_slots {
                    self.scores[s] += 1;
                }
            }
            _ => {}
        }

        FetchResult {
            values,
            hit_mask,
            miss_keys,
        }
    }

    /// Inserts uncached keys with their rows. Keys beyond the replacement
    /// limit are dropped from the tail of the batch; keys already cached or
    /// repeated within the batch are skipped.
    pub fn insert_batch(&mut self, keys: &[CacheKey], values: &[f32]) -> Result<InsertOutcome> {
        if values.len() != keys.len() * self.dim {
            return Err(Error::Argument(format!(
                "{} keys need {} values at dim {}, got {}",
                keys.len(),
                keys.len() * self.dim,
                self.dim,
                values.len()
            )));
        }
        let limit = self.replace_limit();
        let mut batch_seen = HashSet::new();
        let todo: Vec<usize> = (0..keys.len())
            .filter(|&i| !self.slot_of.contains_key(&keys[i]) && batch_seen.insert(keys[i]))
            .take(limit)
            .collect();
        if todo.is_empty() {
            return Ok(InsertOutcome::default());
        }

        let slots = match self.policy {
            CachePolicy::Fifo => {
                let slots: Vec<usize> = (0..todo.len())
                    .map(|j| (self.fifo_head + j) % self.capacity)
                    .collect();
                self.fifo_head = (self.fifo_head + todo.len()) % self.capacity;
                slots
            }
            CachePolicy::Lru | CachePolicy::Lfu => self.pick_slots(todo.len()),
        };

        let mut evicted = Vec::new();
        for (&i, &s) in todo.iter().zip(&slots) {
            if let Some(old) = self.keys[s].take() {
                self.slot_of.remove(&old);
                evicted.push(old);
            }
            let k = keys[i];
            self.keys[s] = Some(k);
            self.slot_of.insert(k, s);
            self.scores[s] = match self.policy {
                CachePolicy::Lfu => 1,
                _ => 0,
            };
            let dim = self.dim;
            self.storage[s * dim..(s + 1) * dim].copy_from_slice(&values[i * dim..(i + 1) * dim]);
        }
        self.evictions += evicted.len() as u64;
        Ok(InsertOutcome {
            inserted: todo.len(),
            evicted,
        })
    }

    /// Free slots in index order, then the lowest-scoring occupied slots.
    fn pick_slots(&self, n: usize) -> Vec<usize> {
        let mut slots: Vec<usize> = (0..self.capacity)
            .filter(|&s| self.keys[s].is_none())
            .take(n)
            .collect();
        let need = n - slots.len();
        if need > 0 {
            let mut occupied: Vec<(i64, usize)> = (0..self.capacity)
                .filter(|&s| self.keys[s].is_some())
                .map(|s| (self.scores[s], s))
                .collect();
            if need < occupied.len() {
                occupied.select_nth_unstable(need - 1);
                occupied.truncate(need);
            }
            occupied.sort_unstable();
            slots.extend(occupied.into_iter().map(|(_, s)| s));
        }
        slots
    }

    pub fn stats(&self) -> CacheStats {
        let total = self.hits + self.misses;
        CacheStats {
            hits: self.hits,
            misses: self.misses,
            hit_rate: if total == 0 {
                0.0
            } else {
                self.hits as f64 / total as f64
            },
            evictions: self.evictions,
        }
    }

    pub fn reset_stats(&mut self) {
        self.hits = 0;
        self.misses = 0;
        self.evictions = 0;
    }

    pub fn snapshot(&self) -> CacheSnapshot {
        CacheSnapshot {
            policy: self.policy,
            capacity: self.capacity,
            dim: self.dim,
            lambda: self.lambda,
            keys: self.keys.clone(),
            scores: self.scores.clone(),
            fifo_head: self.fifo_head,
            storage: self.storage.clone(),
        }
    }

    /// Restores contents from `snap`. Hit/miss counters are left alone.
    pub fn restore(&mut self, snap: &CacheSnapshot) -> Result<()> {
        if snap.policy != self.policy || snap.capacity != self.capacity || snap.dim != self.dim {
            return Err(Error::Shape(format!(
                "snapshot {:?}/{}/{} does not fit cache {:?}/{}/{}",
                snap.policy, snap.capacity, snap.dim, self.policy, self.capacity, self.dim
            )));
        }
        self.keys.clone_from(&snap.keys);
        self.scores.clone_from(&snap.scores);
        self.fifo_head = snap.fifo_head;
        self.storage.clone_from(&snap.storage);
        self.slot_of = self
            .keys
            .iter()
            .enumerate()
            .filter_map(|(s, k)| k.map(|k| (k, s)))
            .collect();
        Ok(())
    }

    pub fn from_snapshot(snap: &CacheSnapshot) -> Result<Self> {
        let mut c = Self::new(snap.policy, snap.capacity, snap.dim, snap.lambda)?;
        c.restore(snap)?;
        Ok(c)
    }

    /// Writes the snapshot file format:
    /// `TGCS | version u32 | policy u8 | capacity u64 | dim u32 | lambda f64 |
    /// capacity x (occupied u8, key u64) | capacity x score i64 | fifo_head u64 |
    /// f32[capacity * dim]`.
    pub fn persist<W: Write>(&self, sink: &mut W) -> Result<()> {
        self.snapshot().write_to(sink)?;
        Ok(())
    }

    pub fn load<R: Read>(source: &mut R) -> Result<Self> {
        Self::from_snapshot(&CacheSnapshot::read_from(source)?)
    }
}

impl CacheSnapshot {
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_header(w, SNAPSHOT_MAGIC, SNAPSHOT_VERSION)?;
        w.write_u8(self.policy.code())?;
        w.write_u64::<LittleEndian>(self.capacity as u64)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_f64::<LittleEndian>(self.lambda)?;
        for k in &self.keys {
            w.write_u8(k.is_some() as u8)?;
            w.write_u64::<LittleEndian>(k.unwrap_or(0))?;
        }
        for &s in &self.scores {
            w.write_i64::<LittleEndian>(s)?;
        }
        w.write_u64::<LittleEndian>(self.fifo_head as u64)?;
        for &x in &self.storage {
            w.write_f32::<LittleEndian>(x)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        const WHAT: &str = "cache snapshot";
        let fmt = |e| eof_as_format(e, WHAT);
        read_header(r, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, WHAT)?;
        let code = r.read_u8().map_err(fmt)?;
        let policy = CachePolicy::from_code(code)
            .ok_or_else(|| Error::format(WHAT, format!("unknown policy {code}")))?;
        let capacity = r.read_u64::<LittleEndian>().map_err(fmt)? as usize;
        let dim = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        let lambda = r.read_f64::<LittleEndian>().map_err(fmt)?;
        let mut keys = Vec::with_capacity(capacity.min(1 << 20));
        let mut seen = HashSet::new();
        for _ in 0..capacity {
            let occupied = r.read_u8().map_err(fmt)?;
            let key = r.read_u64::<LittleEndian>().map_err(fmt)?;
            keys.push(match occupied {
                0 => None,
                1 if seen.insert(key) => Some(key),
                1 => return Err(Error::format(WHAT, format!("duplicate key {key}"))),
                x => return Err(Error::format(WHAT, format!("occupancy byte {x}"))),
            });
        }
        let mut scores = Vec::with_capacity(capacity.min(1 << 20));
        for _ in 0..capacity {
            scores.push(r.read_i64::<LittleEndian>().map_err(fmt)?);
        }
        let fifo_head = r.read_u64::<LittleEndian>().map_err(fmt)? as usize;
        if capacity > 0 && fifo_head >= capacity {
            return Err(Error::format(WHAT, format!("fifo head {fifo_head} out of range")));
        }
        let mut storage = Vec::with_capacity((capacity * dim).min(1 << 24));
        for _ in 0..capacity * dim {
            storage.push(r.read_f32::<LittleEndian>().map_err(fmt)?);
        }
        Ok(CacheSnapshot {
            policy,
            capacity,
            dim,
            lambda,
            keys,
            scores,
            fifo_head,
            storage,
        })
    }
}
