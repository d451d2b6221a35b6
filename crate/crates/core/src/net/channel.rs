use std::collections::VecDeque;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::frame::Frame;
use super::mesh::NetObserver;
use super::PartyId;
use crate::error::{Error, Result};

pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_secs(30);

enum Sink {
    Memory(Sender<Frame>),
    Tcp(Mutex<BufWriter<TcpStream>>),
}

/// One end of an ordered, reliable link to a single peer.
///
/// Frames from `local` to `peer` arrive exactly once and in send order.
/// Sessions multiplex over the link; [`Endpoint::recv_session`] buffers
/// frames of other sessions until they are asked for.
pub struct Endpoint {
    local: PartyId,
    peer: PartyId,
    sink: Sink,
    inbox: Receiver<Frame>,
    pending: VecDeque<Frame>,
    timeout: Duration,
    observer: Arc<NetObserver>,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("local", &self.local)
            .field("peer", &self.peer)
            .finish()
    }
}

impl Endpoint {
    /// Two connected in-memory endpoints.
    pub(crate) fn memory_pair(a: PartyId, b: PartyId, observer: Arc<NetObserver>, timeout: Duration) -> (Endpoint, Endpoint) {
        let (tx_ab, rx_ab) = mpsc::channel();
        let (tx_ba, rx_ba) = mpsc::channel();
        (
            Endpoint {
                local: a,
                peer: b,
                sink: Sink::Memory(tx_ab),
                inbox: rx_ba,
                pending: VecDeque::new(),
                timeout,
                observer: observer.clone(),
            },
            Endpoint {
                local: b,
                peer: a,
                sink: Sink::Memory(tx_ba),
                inbox: rx_ab,
                pending: VecDeque::new(),
                timeout,
                observer,
            },
        )
    }

    /// A self-addressed lane.
    pub(crate) fn loopback(id: PartyId, observer: Arc<NetObserver>, timeout: Duration) -> Endpoint {
        let (tx, rx) = mpsc::channel();
        Endpoint {
            local: id,
            peer: id,
            sink: Sink::Memory(tx),
            inbox: rx,
            pending: VecDeque::new(),
            timeout,
            observer,
        }
    }

    /// Wrap a connected stream; a reader thread drains it into the inbox so
    /// that writers never block on a peer that is itself writing.
    pub(crate) fn tcp(local: PartyId, peer: PartyId, stream: TcpStream, observer: Arc<NetObserver>, timeout: Duration) -> Result<Endpoint> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name(format!("rx-{local}-{peer}"))
            .spawn(move || {
                let mut r = BufReader::with_capacity(1 << 16, reader);
                loop {
                    match Frame::read_from(&mut r) {
                        Ok(Some(f)) => {
                            if tx.send(f).is_err() {
                                break;
                            }
                        }
                        Ok(None) => break,
                        Err(e) => {
                            log::debug!("reader {local}<-{peer} stopped: {e}");
                            break;
                        }
                    }
                }
            })?;
        Ok(Endpoint {
            local,
            peer,
            sink: Sink::Tcp(Mutex::new(BufWriter::with_capacity(1 << 16, stream))),
            inbox: rx,
            pending: VecDeque::new(),
            timeout,
            observer,
        })
    }

    pub fn local(&self) -> PartyId {
        self.local
    }

    pub fn peer(&self) -> PartyId {
        self.peer
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn send(&self, frame: Frame) -> Result<()> {
        self.observer.observe(self.local, self.peer, &frame);
        match &self.sink {
            Sink::Memory(tx) => tx
                .send(frame)
                .map_err(|_| Error::transport(self.local, self.peer, "channel closed")),
            Sink::Tcp(w) => {
                let mut w = w.lock().unwrap();
                frame
                    .write_to(&mut *w)
                    .and_then(|_| w.flush().map_err(Error::from))
                    .map_err(|e| Error::transport(self.local, self.peer, e.to_string()))
            }
        }
    }

    fn pull(&mut self) -> Result<Frame> {
        match self.inbox.recv_timeout(self.timeout) {
            Ok(f) => Ok(f),
            Err(RecvTimeoutError::Timeout) => Err(Error::transport(
                self.peer,
                self.local,
                format!("no frame within {:?}", self.timeout),
            )),
            Err(RecvTimeoutError::Disconnected) => Err(Error::transport(self.peer, self.local, "channel closed")),
        }
    }

    /// Next frame in arrival order, of any session.
    pub fn recv(&mut self) -> Result<Frame> {
        match self.pending.pop_front() {
            Some(f) => Ok(f),
            None => self.pull(),
        }
    }

    /// Next frame of `session`, buffering frames of other sessions.
    pub fn recv_session(&mut self, session: u64) -> Result<Frame> {
        if let Some(pos) = self.pending.iter().position(|f| f.session_id == session) {
            return Ok(self.pending.remove(pos).unwrap());
        }
        loop {
            let f = self.pull()?;
            if f.session_id == session {
                return Ok(f);
            }
            self.pending.push_back(f);
        }
    }
}
