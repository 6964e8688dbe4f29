//! Host-side feature store: node features, edge features and node memory.
//!
//! Node features and memories are keyed maps. Edge features are kept in
//! ascending edge-id order, which holds because new edges always get larger
//! ids, so lookups are a binary search over the id column.

use std::collections::HashMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::codec::{eof_as_format, read_header, write_header};
use crate::error::{Error, Result};
use crate::{EdgeId, NodeId, Timestamp};

pub const FEATURE_MAGIC: &[u8; 4] = b"TGFF";
pub const FEATURE_VERSION: u32 = 1;

/// Row-major batch of looked-up features. Missing rows are zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureRows {
    pub dim: usize,
    pub data: Vec<f32>,
    pub found: Vec<bool>,
}

impl FeatureRows {
    fn zeros(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * n],
            found: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.found.len()
    }

    pub fn is_empty(&self) -> bool {
        self.found.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn set(&mut self, i: usize, row: &[f32]) {
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(row);
        self.found[i] = true;
    }
}

fn check_rows(dim: usize, n: usize, rows: &[f32]) -> Result<()> {
    if rows.len() != dim * n {
        return Err(Error::Shape(format!(
            "{n} ids need {} values at dim {dim}, got {}",
            dim * n,
            rows.len()
        )));
    }
    Ok(())
}

/// Node id -> feature vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeFeatureTable {
    dim: usize,
    index: HashMap<NodeId, usize>,
    data: Vec<f32>,
}

impl NodeFeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Inserts or overwrites rows for `ids`.
    pub fn upsert(&mut self, ids: &[NodeId], rows: &[f32]) -> Result<()> {
        check_rows(self.dim, ids.len(), rows)?;
        for (i, &id) in ids.iter().enumerate() {
            let row = &rows[i * self.dim..(i + 1) * self.dim];
            match self.index.get(&id) {
                Some(&pos) => self.data[pos * self.dim..(pos + 1) * self.dim].copy_from_slice(row),
                None => {
                    self.index.insert(id, self.index.len());
                    self.data.extend_from_slice(row);
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: NodeId) -> Option<&[f32]> {
        self.index
            .get(&id)
            .map(|&p| &self.data[p * self.dim..(p + 1) * self.dim])
    }

    pub fn get_node_features(&self, ids: &[NodeId]) -> FeatureRows {
        let mut out = FeatureRows::zeros(self.dim, ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if let Some(row) = self.get(id) {
                out.set(i, row);
            }
        }
        out
    }

    /// Ids in ascending order with their rows, for serialization.
    fn sorted(&self) -> (Vec<u64>, Vec<f32>) {
        let mut ids: Vec<_> = self.index.keys().copied().collect();
        ids.sort_unstable();
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in &ids {
            data.extend_from_slice(self.get(*id).expect("indexed"));
        }
        (ids, data)
    }
}

/// Edge features in strictly increasing edge-id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeFeatureTable {
    dim: usize,
    ids: Vec<EdgeId>,
    data: Vec<f32>,
}

impl EdgeFeatureTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[EdgeId] {
        &self.ids
    }

    pub fn max_id(&self) -> Option<EdgeId> {
        self.ids.last().copied()
    }

    pub fn append_edge_features(&mut self, ids: &[EdgeId], rows: &[f32]) -> Result<()> {
        check_rows(self.dim, ids.len(), rows)?;
        let mut prev = self.max_id();
        for &id in ids {
            if prev.is_some_and(|p| id <= p) {
                return Err(Error::Argument(format!(
                    "edge id {id} does not exceed previous id {}",
                    prev.unwrap()
                )));
            }
            prev = Some(id);
        }
        self.ids.extend_from_slice(ids);
        self.data.extend_from_slice(rows);
        Ok(())
    }

    pub fn get(&self, id: EdgeId) -> Option<&[f32]> {
        let pos = self.ids.binary_search(&id).ok()?;
        Some(&self.data[pos * self.dim..(pos + 1) * self.dim])
    }

    pub fn get_edge_features(&self, ids: &[EdgeId]) -> FeatureRows {
        let mut out = FeatureRows::zeros(self.dim, ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if let Some(row) = self.get(id) {
                out.set(i, row);
            }
        }
        out
    }
}

/// Per-node memory vectors and the time each was last written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeMemoryTable {
    vectors: NodeFeatureTable,
    last_update: HashMap<NodeId, Timestamp>,
}

impl NodeMemoryTable {
    pub fn new(dim: usize) -> Self {
        Self {
            vectors: NodeFeatureTable::new(dim),
            last_update: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn update_memory(&mut self, ids: &[NodeId], rows: &[f32], timestamps: &[Timestamp]) -> Result<()> {
        if timestamps.len() != ids.len() {
            return Err(Error::Shape(format!(
                "{} ids but {} timestamps",
                ids.len(),
                timestamps.len()
            )));
        }
        self.vectors.upsert(ids, rows)?;
        for (&id, &t) in ids.iter().zip(timestamps) {
            self.last_update.insert(id, t);
        }
        Ok(())
    }

    pub fn get_memory(&self, ids: &[NodeId]) -> FeatureRows {
        self.vectors.get_node_features(ids)
    }

    pub fn last_update(&self, id: NodeId) -> Option<Timestamp> {
        self.last_update.get(&id).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Node,
    Edge,
}

impl FeatureKind {
    fn code(self) -> u8 {
        match self {
            FeatureKind::Node => 0,
            FeatureKind::Edge => 1,
        }
    }
}

/// Contents of a feature file.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureFile {
    Node(NodeFeatureTable),
    Edge(EdgeFeatureTable),
}

fn write_feature_file<W: Write>(
    w: &mut W,
    kind: FeatureKind,
    dim: usize,
    ids: &[u64],
    data: &[f32],
) -> Result<()> {
    write_header(w, FEATURE_MAGIC, FEATURE_VERSION)?;
    w.write_u8(kind.code())?;
    w.write_u32::<LittleEndian>(dim as u32)?;
    w.write_u64::<LittleEndian>(ids.len() as u64)?;
    for &id in ids {
        w.write_u64::<LittleEndian>(id)?;
    }
    for &x in data {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

/// `TGFF | version u32 | kind u8 | dim u32 | count u64 | ids u64[count] | f32[count * dim]`
pub fn write_node_features<W: Write>(w: &mut W, t: &NodeFeatureTable) -> Result<()> {
    let (ids, data) = t.sorted();
    write_feature_file(w, FeatureKind::Node, t.dim, &ids, &data)
}

pub fn write_edge_features<W: Write>(w: &mut W, t: &EdgeFeatureTable) -> Result<()> {
    write_feature_file(w, FeatureKind::Edge, t.dim, &t.ids, &t.data)
}

pub fn read_feature_file<R: Read>(r: &mut R) -> Result<FeatureFile> {
    const WHAT: &str = "feature file";
    read_header(r, FEATURE_MAGIC, FEATURE_VERSION, WHAT)?;
    let fmt = |e| eof_as_format(e, WHAT);
    let kind = r.read_u8().map_err(fmt)?;
    let dim = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(fmt)? as usize;
    let mut ids = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        ids.push(r.read_u64::<LittleEndian>().map_err(fmt)?);
    }
    let mut data = Vec::with_capacity((count * dim).min(1 << 24));
    for _ in 0..count * dim {
        data.push(r.read_f32::<LittleEndian>().map_err(fmt)?);
    }
    match kind {
        0 => {
            let mut t = NodeFeatureTable::new(dim);
            t.upsert(&ids, &data)?;
            Ok(FeatureFile::Node(t))
        }
        1 => {
            let mut t = EdgeFeatureTable::new(dim);
            t.append_edge_features(&ids, &data)
                .map_err(|e| Error::format(WHAT, e.to_string()))?;
            Ok(FeatureFile::Edge(t))
        }
        k => Err(Error::format(WHAT, format!("unknown kind {k}"))),
    }
}

/// Reads `id,f0,f1,...` rows (no header) into `(ids, row-major values, dim)`.
pub fn read_feature_csv<R: Read>(r: R) -> Result<(Vec<u64>, Vec<f32>, usize)> {
    const WHAT: &str = "feature csv";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(WHAT, e.to_string()))?;
        let bad = |what: &str| Error::format(WHAT, format!("row {}: bad {what}", line + 1));
        let id: u64 = rec.get(0).ok_or_else(|| bad("id"))?.parse().map_err(|_| bad("id"))?;
        let d = rec.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(bad("width"));
        }
        ids.push(id);
        for field in rec.iter().skip(1) {
            data.push(field.parse::<f32>().map_err(|_| bad("value"))?);
        }
    }
    Ok((ids, data, dim.unwrap_or(0)))
}
