//! Offload file format.
//!
//! ```text
//! "TGOF" | version u32
//! repeated until EOF:
//!   node_id u64 | size u32 | size x (neighbor u64, edge_id u64, timestamp i64, valid u8)
//! ```
//! All integers are little-endian.

use std::io::{self, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::tier::EdgeSegment;
use crate::codec::{eof_as_format, read_header, write_header};
use crate::error::{Error, Result};
use crate::{EdgeId, NodeId, Timestamp};

pub const OFFLOAD_MAGIC: &[u8; 4] = b"TGOF";
pub const OFFLOAD_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadedEdge {
    pub neighbor: NodeId,
    pub edge_id: EdgeId,
    pub timestamp: Timestamp,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadedBlock {
    pub node: NodeId,
    pub edges: Vec<OffloadedEdge>,
}

pub(crate) fn encode<'a>(blocks: impl Iterator<Item = (NodeId, &'a EdgeSegment)>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_header(&mut buf, OFFLOAD_MAGIC, OFFLOAD_VERSION).expect("vec write");
    for (node, seg) in blocks {
        write_block(&mut buf, node, seg).expect("vec write");
    }
    buf
}

fn write_block(buf: &mut Vec<u8>, node: NodeId, seg: &EdgeSegment) -> io::Result<()> {
    buf.write_u64::<LittleEndian>(node)?;
    buf.write_u32::<LittleEndian>(seg.len() as u32)?;
    for i in 0..seg.len() {
        buf.write_u64::<LittleEndian>(seg.neighbors[i])?;
        buf.write_u64::<LittleEndian>(seg.edge_ids[i])?;
        buf.write_i64::<LittleEndian>(seg.timestamps[i])?;
        buf.write_u8(seg.valid[i] as u8)?;
    }
    Ok(())
}

/// Writes blocks in the offload format. Used to re-encode a decoded file.
pub fn write_offload<W: io::Write>(w: &mut W, blocks: &[OffloadedBlock]) -> io::Result<()> {
    write_header(w, OFFLOAD_MAGIC, OFFLOAD_VERSION)?;
    for b in blocks {
        w.write_u64::<LittleEndian>(b.node)?;
        w.write_u32::<LittleEndian>(b.edges.len() as u32)?;
        for e in &b.edges {
            w.write_u64::<LittleEndian>(e.neighbor)?;
            w.write_u64::<LittleEndian>(e.edge_id)?;
            w.write_i64::<LittleEndian>(e.timestamp)?;
            w.write_u8(e.valid as u8)?;
        }
    }
    Ok(())
}

pub fn read_offload<R: Read>(r: &mut R) -> Result<Vec<OffloadedBlock>> {
    const WHAT: &str = "offload file";
    read_header(r, OFFLOAD_MAGIC, OFFLOAD_VERSION, WHAT)?;
    let mut blocks = Vec::new();
    loop {
        let mut first = [0u8; 1];
        if r.read(&mut first)? == 0 {
            break;
        }
        let mut rest = [0u8; 7];
        r.read_exact(&mut rest).map_err(|e| eof_as_format(e, WHAT))?;
        let mut node_bytes = [0u8; 8];
        node_bytes[0] = first[0];
        node_bytes[1..].copy_from_slice(&rest);
        let node = u64::from_le_bytes(node_bytes);

        let size = r
            .read_u32::<LittleEndian>()
            .map_err(|e| eof_as_format(e, WHAT))?;
        let mut edges = Vec::with_capacity(size.min(1 << 20) as usize);
        for _ in 0..size {
            let mut rec = || -> io::Result<OffloadedEdge> {
                Ok(OffloadedEdge {
                    neighbor: r.read_u64::<LittleEndian>()?,
                    edge_id: r.read_u64::<LittleEndian>()?,
                    timestamp: r.read_i64::<LittleEndian>()?,
                    valid: match r.read_u8()? {
                        0 => false,
                        1 => true,
                        x => {
                            return Err(io::Error::new(
                                io::ErrorKind::InvalidData,
                                format!("validity byte {x}"),
                            ))
                        }
                    },
                })
            };
            let e = rec().map_err(|e| match e.kind() {
                io::ErrorKind::InvalidData => Error::format(WHAT, e.to_string()),
                _ => eof_as_format(e, WHAT),
            })?;
            edges.push(e);
        }
        blocks.push(OffloadedBlock { node, edges });
    }
    Ok(blocks)
}
