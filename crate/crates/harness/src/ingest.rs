//! CSV edge streams: `src,dst,timestamp[,label]`, one edge per row, sorted by
//! timestamp. A leading header row is skipped when its timestamp column is
//! not an integer.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use tgflow_core::graph::TemporalEdge;
use tgflow_core::NodeId;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeStream {
    pub edges: Vec<TemporalEdge>,
    /// Optional fourth column.
    pub labels: Vec<Option<String>>,
    /// Original keys by dense id, when keys were remapped.
    pub node_keys: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Map arbitrary node keys to dense ids in order of first appearance.
    /// Without it node keys must be unsigned integers.
    pub dense_ids: bool,
}

pub fn read_edge_csv<R: Read>(reader: R, opts: IngestOptions) -> Result<EdgeStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = EdgeStream::default();
    let mut dense: HashMap<String, NodeId> = HashMap::new();
    let mut keys: Vec<String> = Vec::new();
    let mut last_t = None;

    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec?;
        let fail = |message: String| HarnessError::Ingest { row, message };
        if rec.len() < 3 || rec.len() > 4 {
            return Err(fail(format!("expected 3 or 4 columns, found {}", rec.len())));
        }
        let Ok(t) = rec[2].parse::<i64>() else {
            if row == 1 {
                continue;
            }
            return Err(fail(format!("timestamp {:?} is not an integer", &rec[2])));
        };
        if last_t.is_some_and(|l| t < l) {
            return Err(fail(format!("timestamp {t} is earlier than the previous row")));
        }
        last_t = Some(t);

        let mut node = |key: &str| -> Result<NodeId> {
            if opts.dense_ids {
                let next = keys.len() as NodeId;
                Ok(*dense.entry(key.to_string()).or_insert_with(|| {
                    keys.push(key.to_string());
                    next
                }))
            } else {
                key.parse::<NodeId>()
                    .map_err(|_| fail(format!("node id {key:?} is not an unsigned integer")))
            }
        };
        let src = node(&rec[0])?;
        let dst = node(&rec[1])?;
        out.edges.push(TemporalEdge::new(src, dst, t));
        out.labels.push(rec.get(3).map(str::to_string));
    }
    if opts.dense_ids {
        out.node_keys = Some(keys);
    }
    Ok(out)
}

pub fn read_edge_file(path: &Path, opts: IngestOptions) -> Result<EdgeStream> {
    read_edge_csv(File::open(path)?, opts)
}

pub fn write_edge_csv<W: Write>(w: W, edges: &[TemporalEdge]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["src", "dst", "timestamp"])?;
    for e in edges {
        wr.serialize((e.src, e.dst, e.timestamp))?;
    }
    wr.flush()?;
    Ok(())
}
