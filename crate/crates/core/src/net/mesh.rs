use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::audit::Audit;
use super::channel::{Endpoint, DEFAULT_RECV_TIMEOUT};
use super::frame::Frame;
use super::metrics::MeshMetrics;
use super::topology::{PartyTopology, Role};
use super::PartyId;
use crate::error::{Error, Result};

/// Everything that watches frames as they are sent: metrics, the optional
/// audit, and optional per-party capture of received frames.
#[derive(Debug, Default)]
pub struct NetObserver {
    pub metrics: MeshMetrics,
    audit: Option<Audit>,
    capture: Mutex<HashMap<PartyId, Vec<(PartyId, Frame)>>>,
}

impl NetObserver {
    pub fn new(audit: Option<Audit>) -> Self {
        NetObserver {
            metrics: MeshMetrics::default(),
            audit,
            capture: Mutex::new(HashMap::new()),
        }
    }

    pub(crate) fn observe(&self, from: PartyId, to: PartyId, frame: &Frame) {
        self.metrics.record(from, to, frame);
        if let Some(a) = &self.audit {
            a.inspect(from, to, frame);
        }
        let mut cap = self.capture.lock().unwrap();
        if let Some(buf) = cap.get_mut(&to) {
            buf.push((from, frame.clone()));
        }
    }

    pub fn audit(&self) -> Option<&Audit> {
        self.audit.as_ref()
    }

    /// Start recording every frame delivered to `party`.
    pub fn tap(&self, party: PartyId) {
        self.capture.lock().unwrap().entry(party).or_default();
    }

    pub fn take_captured(&self, party: PartyId) -> Vec<(PartyId, Frame)> {
        self.capture
            .lock()
            .unwrap()
            .get_mut(&party)
            .map(std::mem::take)
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug)]
pub enum TransportMode {
    InProcess,
    /// Loopback TCP sockets between threads of this process.
    TcpLoopback,
}

#[derive(Clone, Debug)]
pub struct MeshOptions {
    pub recv_timeout: Duration,
    pub audit: bool,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            recv_timeout: DEFAULT_RECV_TIMEOUT,
            audit: false,
        }
    }
}

/// A party's set of links.
#[derive(Debug)]
pub struct PartyNet {
    id: PartyId,
    role: Role,
    links: BTreeMap<PartyId, Endpoint>,
    observer: Arc<NetObserver>,
}

impl PartyNet {
    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn peers(&self) -> impl Iterator<Item = PartyId> + '_ {
        self.links.keys().copied()
    }

    pub fn observer(&self) -> &Arc<NetObserver> {
        &self.observer
    }

    pub fn link(&mut self, peer: PartyId) -> Result<&mut Endpoint> {
        let id = self.id;
        self.links
            .get_mut(&peer)
            .ok_or_else(|| Error::transport(id, peer, "no such link"))
    }

    pub fn send(&mut self, to: PartyId, frame: Frame) -> Result<()> {
        self.link(to)?.send(frame)
    }

    pub fn recv(&mut self, from: PartyId) -> Result<Frame> {
        self.link(from)?.recv()
    }

    pub fn recv_session(&mut self, from: PartyId, session: u64) -> Result<Frame> {
        self.link(from)?.recv_session(session)
    }

    pub fn record_phase(&self, phase: impl Into<String>, started: Instant) {
        self.observer.metrics.record_phase(phase, started.elapsed());
    }
}

/// A connected set of parties, before each party is handed to its thread.
pub struct Mesh {
    topology: PartyTopology,
    parties: BTreeMap<PartyId, PartyNet>,
    observer: Arc<NetObserver>,
    link_count: usize,
}

impl Mesh {
    pub fn topology(&self) -> &PartyTopology {
        &self.topology
    }

    pub fn observer(&self) -> Arc<NetObserver> {
        self.observer.clone()
    }

    /// Undirected links established.
    pub fn link_count(&self) -> usize {
        self.link_count
    }

    pub fn take(&mut self, id: PartyId) -> Result<PartyNet> {
        self.parties
            .remove(&id)
            .ok_or_else(|| Error::Topology(format!("{id} not in mesh or already taken")))
    }
}

fn neighbours(topology: &PartyTopology) -> BTreeMap<PartyId, BTreeSet<PartyId>> {
    let mut n: BTreeMap<PartyId, BTreeSet<PartyId>> = topology.all().into_iter().map(|p| (p, BTreeSet::new())).collect();
    for (a, b) in topology.links() {
        n.get_mut(&a).unwrap().insert(b);
        n.get_mut(&b).unwrap().insert(a);
    }
    n
}

/// Build the full link set of `topology`.
pub fn connect(topology: &PartyTopology, mode: TransportMode, options: MeshOptions) -> Result<Mesh> {
    let audit = options.audit.then(|| Audit::new(topology.clone()));
    let observer = Arc::new(NetObserver::new(audit));
    let links = topology.links();
    let mut endpoints: BTreeMap<PartyId, BTreeMap<PartyId, Endpoint>> =
        topology.all().into_iter().map(|p| (p, BTreeMap::new())).collect();

    match mode {
        TransportMode::InProcess => {
            for &(a, b) in &links {
                if a == b {
                    let e = Endpoint::loopback(a, observer.clone(), options.recv_timeout);
                    endpoints.get_mut(&a).unwrap().insert(a, e);
                } else {
                    let (ea, eb) = Endpoint::memory_pair(a, b, observer.clone(), options.recv_timeout);
                    endpoints.get_mut(&a).unwrap().insert(b, ea);
                    endpoints.get_mut(&b).unwrap().insert(a, eb);
                }
            }
        }
        TransportMode::TcpLoopback => {
            let mut listeners = BTreeMap::new();
            let mut addrs = BTreeMap::new();
            for p in topology.all() {
                let l = TcpListener::bind("127.0.0.1:0")?;
                addrs.insert(p, l.local_addr()?);
                listeners.insert(p, l);
            }
            let results: Vec<(PartyId, Result<BTreeMap<PartyId, Endpoint>>)> = std::thread::scope(|s| {
                let handles: Vec<_> = listeners
                    .into_iter()
                    .map(|(p, l)| {
                        let addrs = &addrs;
                        let observer = observer.clone();
                        let timeout = options.recv_timeout;
                        (p, s.spawn(move || tcp_links(topology, p, l, addrs, observer, timeout)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|(p, h)| (p, h.join().expect("tcp join thread panicked")))
                    .collect()
            });
            for (p, r) in results {
                endpoints.insert(p, r?);
            }
        }
    }

    let parties = endpoints
        .into_iter()
        .map(|(id, links)| {
            let role = topology.role(id).expect("party from topology");
            (
                id,
                PartyNet {
                    id,
                    role,
                    links,
                    observer: observer.clone(),
                },
            )
        })
        .collect();
    Ok(Mesh {
        topology: topology.clone(),
        parties,
        observer,
        link_count: links.len(),
    })
}

/// Join a TCP mesh as `me`: accept links from lower ids, dial higher ids.
/// Each stream opens with the dialer's u32 party id.
pub fn join_tcp(
    topology: &PartyTopology,
    me: PartyId,
    listener: TcpListener,
    addrs: &BTreeMap<PartyId, SocketAddr>,
    options: MeshOptions,
) -> Result<PartyNet> {
    let role = topology
        .role(me)
        .ok_or_else(|| Error::Topology(format!("{me} not in topology")))?;
    let audit = options.audit.then(|| Audit::new(topology.clone()));
    let observer = Arc::new(NetObserver::new(audit));
    let links = tcp_links(topology, me, listener, addrs, observer.clone(), options.recv_timeout)?;
    Ok(PartyNet {
        id: me,
        role,
        links,
        observer,
    })
}

fn tcp_links(
    topology: &PartyTopology,
    me: PartyId,
    listener: TcpListener,
    addrs: &BTreeMap<PartyId, SocketAddr>,
    observer: Arc<NetObserver>,
    timeout: Duration,
) -> Result<BTreeMap<PartyId, Endpoint>> {
    let peers = neighbours(topology).remove(&me).unwrap_or_default();
    let mut out = BTreeMap::new();
    if peers.contains(&me) {
        out.insert(me, Endpoint::loopback(me, observer.clone(), timeout));
    }
    let deadline = Instant::now() + timeout;
    for &peer in peers.iter().filter(|&&p| p > me) {
        let addr = addrs
            .get(&peer)
            .ok_or_else(|| Error::Topology(format!("no address for {peer}")))?;
        let mut stream = loop {
            match TcpStream::connect(addr) {
                Ok(s) => break s,
                Err(e) if Instant::now() < deadline => {
                    log::debug!("{me} dialing {peer}: {e}; retrying");
                    std::thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(Error::transport(me, peer, format!("connect {addr}: {e}"))),
            }
        };
        stream.write_all(&me.0.to_le_bytes())?;
        out.insert(peer, Endpoint::tcp(me, peer, stream, observer.clone(), timeout)?);
    }
    let expected: BTreeSet<PartyId> = peers.iter().copied().filter(|&p| p < me).collect();
    let mut accepted = BTreeSet::new();
    listener.set_nonblocking(false)?;
    while accepted != expected {
        let (mut stream, _) = listener.accept()?;
        let mut id = [0u8; 4];
        stream.read_exact(&mut id)?;
        let peer = PartyId(u32::from_le_bytes(id));
        if !expected.contains(&peer) || !accepted.insert(peer) {
            return Err(Error::transport(peer, me, "unexpected handshake"));
        }
        out.insert(peer, Endpoint::tcp(me, peer, stream, observer.clone(), timeout)?);
    }
    Ok(out)
}
