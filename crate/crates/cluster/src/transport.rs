//! Message delivery between trainers and workers.
//!
//! Both transports feed the same worker queues; the TCP transport adds a
//! real socket hop and the wire encoding in front of them.

use std::collections::HashMap;
use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use crossbeam_channel::{bounded, Receiver, Sender};

use crate::error::{ClusterError, Result};
use crate::spec::{ClusterSpec, WorkerId};
use crate::wire::{read_frame, write_frame, Frame};
use crate::worker::Envelope;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransportKind {
    /// Channels between threads of one process.
    #[default]
    InProcess,
    /// Loopback TCP connections carrying wire-encoded frames.
    Tcp,
}

pub trait Transport: Send + Sync {
    /// Sends every call, then waits for all replies, returned in call order.
    fn exchange(&self, calls: Vec<(WorkerId, Frame)>) -> Vec<Result<Frame>>;

    fn kind(&self) -> TransportKind;
}

fn enqueue(queue: &Sender<Envelope>, frame: Frame) -> Option<Receiver<Frame>> {
    let (tx, rx) = bounded(1);
    queue.send(Envelope { frame, reply: tx }).ok().map(|_| rx)
}

pub(crate) struct InProcess {
    spec: ClusterSpec,
    queues: Vec<Sender<Envelope>>,
}

impl InProcess {
    pub fn new(spec: ClusterSpec, queues: Vec<Sender<Envelope>>) -> Self {
        Self { spec, queues }
    }
}

impl Transport for InProcess {
    fn exchange(&self, calls: Vec<(WorkerId, Frame)>) -> Vec<Result<Frame>> {
        let pending: Vec<(WorkerId, Option<Receiver<Frame>>)> = calls
            .into_iter()
            .map(|(w, f)| (w, enqueue(&self.queues[self.spec.index(w)], f)))
            .collect();
        pending
            .into_iter()
            .map(|(w, rx)| rx.and_then(|rx| rx.recv().ok()).ok_or(ClusterError::Unavailable(w)))
            .collect()
    }

    fn kind(&self) -> TransportKind {
        TransportKind::InProcess
    }
}

/// One loopback listener per worker, with a pool of client connections.
pub(crate) struct Tcp {
    spec: ClusterSpec,
    addrs: Vec<SocketAddr>,
    pool: Mutex<HashMap<usize, Vec<TcpStream>>>,
    stop: Arc<AtomicBool>,
    listeners: Vec<JoinHandle<()>>,
}

impl Tcp {
    pub fn start(spec: ClusterSpec, queues: Vec<Sender<Envelope>>) -> Result<Self> {
        let stop = Arc::new(AtomicBool::new(false));
        let mut addrs = Vec::new();
        let mut listeners = Vec::new();
        for (w, queue) in spec.workers().zip(queues) {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            addrs.push(listener.local_addr()?);
            let stop = Arc::clone(&stop);
            let handle = thread::Builder::new()
                .name(format!("listen-{w}"))
                .spawn(move || accept_loop(listener, queue, stop))?;
            listeners.push(handle);
        }
        Ok(Self {
            spec,
            addrs,
            pool: Mutex::new(HashMap::new()),
            stop,
            listeners,
        })
    }

    fn checkout(&self, idx: usize) -> Result<TcpStream> {
        if let Some(s) = self.pool.lock().expect("pool lock").get_mut(&idx).and_then(Vec::pop) {
            return Ok(s);
        }
        let s = TcpStream::connect(self.addrs[idx])?;
        s.set_nodelay(true)?;
        Ok(s)
    }

    fn checkin(&self, idx: usize, s: TcpStream) {
        self.pool.lock().expect("pool lock").entry(idx).or_default().push(s);
    }
}

fn accept_loop(listener: TcpListener, queue: Sender<Envelope>, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match conn {
            Ok(stream) => {
                let queue = queue.clone();
                thread::spawn(move || serve_connection(stream, queue));
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

fn serve_connection(stream: TcpStream, queue: Sender<Envelope>) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(stream);
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                log::warn!("dropping connection: {e}");
                break;
            }
        };
        let Some(reply) = enqueue(&queue, frame).and_then(|rx| rx.recv().ok()) else {
            break;
        };
        if write_frame(&mut writer, &reply).is_err() {
            break;
        }
    }
}

impl Transport for Tcp {
    fn exchange(&self, calls: Vec<(WorkerId, Frame)>) -> Vec<Result<Frame>> {
        let sent: Vec<(usize, Result<TcpStream>)> = calls
            .into_iter()
            .map(|(w, f)| {
                let idx = self.spec.index(w);
                let conn = self.checkout(idx).and_then(|mut s| {
                    write_frame(&mut s, &f)?;
                    Ok(s)
                });
                (idx, conn)
            })
            .collect();
        sent.into_iter()
            .map(|(idx, conn)| {
                let mut s = conn?;
                let frame = read_frame(&mut s)?
                    .ok_or_else(|| ClusterError::Protocol("connection closed before reply".into()))?;
                self.checkin(idx, s);
                Ok(frame)
            })
            .collect()
    }

    fn kind(&self) -> TransportKind {
        TransportKind::Tcp
    }
}

impl Drop for Tcp {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.pool.lock().expect("pool lock").clear();
        for addr in &self.addrs {
            // wakes the blocked accept so the loop sees the stop flag
            let _ = TcpStream::connect(addr);
        }
        for h in self.listeners.drain(..) {
            let _ = h.join();
        }
    }
}
