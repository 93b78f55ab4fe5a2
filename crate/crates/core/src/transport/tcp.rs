//! TCP transport. Each frame on the wire is
//!
//! ```text
//! u32 LE payload length | u16 LE tag | payload
//! ```
//!
//! Connections are set up once: for every pair `i < j`, `P_j` dials `P_i`
//! and sends the 5-byte hello `"CBNN" | j`. Each peer connection gets a
//! writer thread and a reader thread so a send never blocks on the peer.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tracing::debug;

use super::{Frame, PartyId, Transport};
use crate::error::TransportError;

const HELLO: &[u8; 4] = b"CBNN";
const MAX_FRAME: usize = 1 << 30;

pub struct TcpTransport {
    id: PartyId,
    writers: [Option<Sender<Frame>>; 3],
    readers: [Option<Receiver<Result<Frame, TransportError>>>; 3],
    writer_threads: Vec<JoinHandle<()>>,
}

impl TcpTransport {
    /// Binds `addrs[id]` and connects to the other two parties.
    pub fn connect(id: PartyId, addrs: &[SocketAddr; 3], timeout: Duration) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(addrs[id.index()])?;
        Self::with_listener(id, listener, addrs, timeout)
    }

    /// Like [`connect`](Self::connect) with an already bound listener.
    pub fn with_listener(
        id: PartyId,
        listener: TcpListener,
        addrs: &[SocketAddr; 3],
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let deadline = Instant::now() + timeout;
        let mut streams: [Option<TcpStream>; 3] = Default::default();

        for peer in PartyId::ALL.into_iter().filter(|p| *p < id) {
            let mut stream = dial(addrs[peer.index()], deadline)?;
            let mut hello = HELLO.to_vec();
            hello.push(id.index() as u8);
            stream.write_all(&hello)?;
            streams[peer.index()] = Some(stream);
        }

        let expected = PartyId::ALL.into_iter().filter(|p| *p > id).count();
        listener.set_nonblocking(true)?;
        let mut accepted = 0;
        while accepted < expected {
            match listener.accept() {
                Ok((mut stream, remote)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(timeout))?;
                    let mut hello = [0u8; 5];
                    if stream.read_exact(&mut hello).is_err() || &hello[..4] != HELLO {
                        debug!(%remote, "dropping connection with bad hello");
                        continue;
                    }
                    let peer = match PartyId::new(hello[4] as usize) {
                        Some(p) if p > id && streams[p.index()].is_none() => p,
                        _ => {
                            debug!(%remote, "dropping connection from unexpected party");
                            continue;
                        }
                    };
                    stream.set_read_timeout(None)?;
                    streams[peer.index()] = Some(stream);
                    accepted += 1;
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        return Err(TransportError::Io(format!(
                            "{id}: timed out waiting for {} peer connection(s)",
                            expected - accepted
                        )));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }

        let mut writers: [Option<Sender<Frame>>; 3] = Default::default();
        let mut readers: [Option<Receiver<Result<Frame, TransportError>>>; 3] = Default::default();
        let mut writer_threads = Vec::new();
        for (idx, slot) in streams.iter_mut().enumerate() {
            let Some(stream) = slot.take() else { continue };
            let peer = PartyId::new(idx).expect("index < 3");
            stream.set_nodelay(true)?;
            let read_half = stream.try_clone()?;

            let (wtx, wrx) = channel::<Frame>();
            writer_threads.push(thread::spawn(move || write_loop(stream, wrx)));
            writers[idx] = Some(wtx);

            let (rtx, rrx) = channel();
            thread::spawn(move || read_loop(peer, read_half, rtx));
            readers[idx] = Some(rrx);
        }
        Ok(Self {
            id,
            writers,
            readers,
            writer_threads,
        })
    }
}

fn dial(addr: SocketAddr, deadline: Instant) -> Result<TcpStream, TransportError> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                debug!(%addr, error = %e, "retrying connection");
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(TransportError::Io(format!("connecting to {addr}: {e}"))),
        }
    }
}

fn write_loop(stream: TcpStream, frames: Receiver<Frame>) {
    let mut w = BufWriter::new(stream);
    while let Ok(frame) = frames.recv() {
        let ok = w
            .write_all(&(frame.payload.len() as u32).to_le_bytes())
            .and_then(|_| w.write_all(&frame.tag.to_le_bytes()))
            .and_then(|_| w.write_all(&frame.payload))
            .and_then(|_| w.flush());
        if ok.is_err() {
            return;
        }
    }
    let _ = w.flush();
    if let Ok(s) = w.into_inner() {
        let _ = s.shutdown(Shutdown::Write);
    }
}

fn read_loop(peer: PartyId, stream: TcpStream, out: Sender<Result<Frame, TransportError>>) {
    let mut r = BufReader::new(stream);
    loop {
        let mut header = [0u8; 6];
        if r.read_exact(&mut header).is_err() {
            let _ = out.send(Err(TransportError::Disconnected(peer)));
            return;
        }
        let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let tag = u16::from_le_bytes(header[4..].try_into().unwrap());
        if len > MAX_FRAME {
            let _ = out.send(Err(TransportError::Io(format!("oversized frame ({len} bytes) from {peer}"))));
            return;
        }
        let mut payload = vec![0u8; len];
        if r.read_exact(&mut payload).is_err() {
            let _ = out.send(Err(TransportError::Disconnected(peer)));
            return;
        }
        if out.send(Ok(Frame { tag, payload })).is_err() {
            return;
        }
    }
}

impl Transport for TcpTransport {
    fn id(&self) -> PartyId {
        self.id
    }

    fn send(&mut self, to: PartyId, frame: Frame) -> Result<(), TransportError> {
        let tx = self.writers[to.index()]
            .as_ref()
            .ok_or(TransportError::SelfSend(to))?;
        tx.send(frame).map_err(|_| TransportError::Disconnected(to))
    }

    fn recv(&mut self, from: PartyId, timeout: Duration) -> Result<Frame, TransportError> {
        let rx = self.readers[from.index()]
            .as_ref()
            .ok_or(TransportError::SelfSend(from))?;
        match rx.recv_timeout(timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout { from, tag: 0 }),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Disconnected(from)),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        // Closing the queues lets each writer flush and half-close its socket.
        self.writers = Default::default();
        for h in self.writer_threads.drain(..) {
            let _ = h.join();
        }
    }
}
