//! Length-prefixed little-endian wire format.
//!
//! Every frame starts with a fixed header:
//!
//! ```text
//! magic "TGRP" | version u16 | msg_type u16 | request_id u64 | payload_len u32
//! ```
//!
//! Arrays inside payloads are a `u32` element count followed by the elements.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use tgflow_core::sampler::PolicyKind;
use tgflow_core::{EdgeId, NodeId, Timestamp};

use crate::error::{ClusterError, Result};
use crate::spec::WorkerId;

pub const MAGIC: &[u8; 4] = b"TGRP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
/// Frames larger than this are refused instead of allocated.
pub const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum MsgType {
    SampleRequest = 1,
    SampleResponse = 2,
    FeatureRequest = 3,
    FeatureResponse = 4,
    Error = 5,
}

impl MsgType {
    fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => MsgType::SampleRequest,
            2 => MsgType::SampleResponse,
            3 => MsgType::FeatureRequest,
            4 => MsgType::FeatureResponse,
            5 => MsgType::Error,
            _ => return None,
        })
    }
}

/// One hop of sampling for targets owned by the receiving machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteSampleRequest {
    pub origin: WorkerId,
    pub targets: Vec<NodeId>,
    /// Window ends.
    pub timestamps: Vec<Timestamp>,
    pub t_starts: Vec<Timestamp>,
    pub fanout: u32,
    pub policy: PolicyKind,
    /// Look-back window, 0 when unbounded.
    pub delta: Timestamp,
    /// Seed of the hop, already derived from the request seed.
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleResponse {
    pub offsets: Vec<u32>,
    pub neighbors: Vec<NodeId>,
    pub edge_ids: Vec<EdgeId>,
    pub timestamps: Vec<Timestamp>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Node = 0,
    Edge = 1,
    Memory = 2,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureRequest {
    pub origin: WorkerId,
    pub kind: FeatureKind,
    pub ids: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureResponse {
    pub dim: u32,
    pub found: Vec<bool>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    SampleRequest(RemoteSampleRequest),
    SampleResponse(SampleResponse),
    FeatureRequest(FeatureRequest),
    FeatureResponse(FeatureResponse),
    Error(String),
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::SampleRequest(_) => MsgType::SampleRequest,
            Message::SampleResponse(_) => MsgType::SampleResponse,
            Message::FeatureRequest(_) => MsgType::FeatureRequest,
            Message::FeatureResponse(_) => MsgType::FeatureResponse,
            Message::Error(_) => MsgType::Error,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub request_id: u64,
    pub message: Message,
}

fn put_u64s(out: &mut Vec<u8>, xs: impl ExactSizeIterator<Item = u64>) {
    out.write_u32::<LE>(xs.len() as u32).unwrap();
    for x in xs {
        out.write_u64::<LE>(x).unwrap();
    }
}

fn put_i64s(out: &mut Vec<u8>, xs: &[i64]) {
    out.write_u32::<LE>(xs.len() as u32).unwrap();
    for &x in xs {
        out.write_i64::<LE>(x).unwrap();
    }
}

fn put_worker(out: &mut Vec<u8>, w: WorkerId) {
    out.write_u32::<LE>(w.machine as u32).unwrap();
    out.write_u32::<LE>(w.rank as u32).unwrap();
}

fn encode_payload(m: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match m {
        Message::SampleRequest(r) => {
            put_worker(&mut out, r.origin);
            put_u64s(&mut out, r.targets.iter().copied());
            put_i64s(&mut out, &r.timestamps);
            put_i64s(&mut out, &r.t_starts);
            out.write_u32::<LE>(r.fanout).unwrap();
            out.write_u8(r.policy.code()).unwrap();
            out.write_i64::<LE>(r.delta).unwrap();
            out.write_u64::<LE>(r.seed).unwrap();
        }
        Message::SampleResponse(r) => {
            out.write_u32::<LE>(r.offsets.len() as u32).unwrap();
            for &o in &r.offsets {
                out.write_u32::<LE>(o).unwrap();
            }
            put_u64s(&mut out, r.neighbors.iter().copied());
            put_u64s(&mut out, r.edge_ids.iter().copied());
            put_i64s(&mut out, &r.timestamps);
        }
        Message::FeatureRequest(r) => {
            put_worker(&mut out, r.origin);
            out.write_u8(r.kind as u8).unwrap();
            put_u64s(&mut out, r.ids.iter().copied());
        }
        Message::FeatureResponse(r) => {
            out.write_u32::<LE>(r.dim).unwrap();
            out.write_u32::<LE>(r.found.len() as u32).unwrap();
            for &f in &r.found {
                out.write_u8(f as u8).unwrap();
            }
            out.write_u32::<LE>(r.data.len() as u32).unwrap();
            for &x in &r.data {
                out.write_f32::<LE>(x).unwrap();
            }
        }
        Message::Error(s) => {
            out.write_u32::<LE>(s.len() as u32).unwrap();
            out.extend_from_slice(s.as_bytes());
        }
    }
    out
}

/// Cursor over a payload that reports truncation as a protocol error.
struct Payload<'a> {
    buf: &'a [u8],
}

impl Payload<'_> {
    fn fail(e: io::Error) -> ClusterError {
        ClusterError::Protocol(format!("truncated payload: {e}"))
    }

    fn u8(&mut self) -> Result<u8> {
        self.buf.read_u8().map_err(Self::fail)
    }

    fn u32(&mut self) -> Result<u32> {
        self.buf.read_u32::<LE>().map_err(Self::fail)
    }

    fn u64(&mut self) -> Result<u64> {
        self.buf.read_u64::<LE>().map_err(Self::fail)
    }

    fn i64(&mut self) -> Result<i64> {
        self.buf.read_i64::<LE>().map_err(Self::fail)
    }

    /// Element count, checked against the bytes left so a corrupt count
    /// cannot trigger a huge allocation.
    fn count(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() {
            return Err(ClusterError::Protocol(format!(
                "array of {n} elements exceeds remaining {} bytes",
                self.buf.len()
            )));
        }
        Ok(n)
    }

    fn u64s(&mut self) -> Result<Vec<u64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.u64()).collect()
    }

    fn i64s(&mut self) -> Result<Vec<i64>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.i64()).collect()
    }

    fn worker(&mut self) -> Result<WorkerId> {
        Ok(WorkerId {
            machine: self.u32()? as usize,
            rank: self.u32()? as usize,
        })
    }
}

fn decode_payload(t: MsgType, buf: &[u8]) -> Result<Message> {
    let mut p = Payload { buf };
    let m = match t {
        MsgType::SampleRequest => {
            let origin = p.worker()?;
            let targets = p.u64s()?;
            let timestamps = p.i64s()?;
            let t_starts = p.i64s()?;
            let fanout = p.u32()?;
            let code = p.u8()?;
            let policy = PolicyKind::from_code(code)
                .ok_or_else(|| ClusterError::Protocol(format!("unknown policy code {code}")))?;
            Message::SampleRequest(RemoteSampleRequest {
                origin,
                targets,
                timestamps,
                t_starts,
                fanout,
                policy,
                delta: p.i64()?,
                seed: p.u64()?,
            })
        }
        MsgType::SampleResponse => {
            let n = p.count(4)?;
            let offsets = (0..n).map(|_| p.u32()).collect::<Result<_>>()?;
            Message::SampleResponse(SampleResponse {
                offsets,
                neighbors: p.u64s()?,
                edge_ids: p.u64s()?,
                timestamps: p.i64s()?,
            })
        }
        MsgType::FeatureRequest => {
            let origin = p.worker()?;
            let kind = match p.u8()? {
                0 => FeatureKind::Node,
                1 => FeatureKind::Edge,
                2 => FeatureKind::Memory,
                k => return Err(ClusterError::Protocol(format!("unknown feature kind {k}"))),
            };
            Message::FeatureRequest(FeatureRequest {
                origin,
                kind,
                ids: p.u64s()?,
            })
        }
        MsgType::FeatureResponse => {
            let dim = p.u32()?;
            let n = p.count(1)?;
            let found = (0..n).map(|_| p.u8().map(|b| b != 0)).collect::<Result<_>>()?;
            let n = p.count(4)?;
            let data = (0..n)
                .map(|_| p.buf.read_f32::<LE>().map_err(Payload::fail))
                .collect::<Result<_>>()?;
            Message::FeatureResponse(FeatureResponse { dim, found, data })
        }
        MsgType::Error => {
            let n = p.count(1)?;
            let (s, rest) = p.buf.split_at(n);
            p.buf = rest;
            Message::Error(String::from_utf8_lossy(s).into_owned())
        }
    };
    if !p.buf.is_empty() {
        return Err(ClusterError::Protocol(format!("{} trailing payload bytes", p.buf.len())));
    }
    Ok(m)
}

pub fn encode_frame(f: &Frame) -> Vec<u8> {
    let payload = encode_payload(&f.message);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.write_u16::<LE>(VERSION).unwrap();
    out.write_u16::<LE>(f.message.msg_type() as u16).unwrap();
    out.write_u64::<LE>(f.request_id).unwrap();
    out.write_u32::<LE>(payload.len() as u32).unwrap();
    out.extend_from_slice(&payload);
    out
}

pub fn write_frame<W: Write>(w: &mut W, f: &Frame) -> Result<()> {
    w.write_all(&encode_frame(f))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean end of stream before the header yields `None`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ClusterError::Protocol("truncated header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut h = &header[..];
    let mut magic = [0u8; 4];
    h.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ClusterError::Protocol(format!("bad magic {magic:?}")));
    }
    let version = h.read_u16::<LE>()?;
    if version != VERSION {
        return Err(ClusterError::Protocol(format!("unsupported version {version}")));
    }
    let raw_type = h.read_u16::<LE>()?;
    let msg_type = MsgType::from_u16(raw_type)
        .ok_or_else(|| ClusterError::Protocol(format!("unknown message type {raw_type}")))?;
    let request_id = h.read_u64::<LE>()?;
    let len = h.read_u32::<LE>()?;
    if len > MAX_PAYLOAD {
        return Err(ClusterError::Protocol(format!("payload of {len} bytes too large")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ClusterError::Protocol("truncated payload".into()),
        _ => e.into(),
    })?;
    Ok(Some(Frame {
        request_id,
        message: decode_payload(msg_type, &payload)?,
    }))
}
