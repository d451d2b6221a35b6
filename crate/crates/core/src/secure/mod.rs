//! Three-server protocols over replicated shares.
//!
//! Every operation is executed by all three servers in the same order; each
//! server runs its own [`SecureContext`] on its own thread (or process) and
//! the contexts stay in lockstep through the deterministic round schedule.
//!
//! Round costs: add/sub are local; a multiplication is one resharing round
//! plus one truncation round; `msb` is ten rounds, `eq_const` sixteen.

mod arith;
mod boolean;
mod recip;

use std::sync::Arc;

pub use recip::DEFAULT_RECIP_ITERS;
pub use arith::{sec_add, sec_add_public, sec_neg, sec_scale_public, sec_sub, sec_sub_public};

use crate::error::{Error, Result};
use crate::net::{connect, Frame, FrameKind, MeshOptions, MetricsSnapshot, NetObserver, PartyId, PartyNet, PartyTopology, TransportMode};
use crate::ring::{FixedCodec, RingElement};
use crate::sharing::{decode_word_payload, encode_word_payload, next_server, prev_server, ShareTensor, WordKind, ZeroSharer, SERVERS};

/// Protocol state of one compute server.
pub struct SecureContext {
    index: usize,
    servers: [PartyId; 3],
    net: PartyNet,
    zero: ZeroSharer,
    codec: FixedCodec,
    session: u64,
    round: u32,
}

impl std::fmt::Debug for SecureContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecureContext")
            .field("index", &self.index)
            .field("session", &self.session)
            .field("round", &self.round)
            .finish()
    }
}

impl SecureContext {
    pub fn new(index: usize, servers: [PartyId; 3], net: PartyNet, zero: ZeroSharer, codec: FixedCodec) -> Result<Self> {
        if index >= SERVERS || zero.index() != index || net.id() != servers[index] {
            return Err(Error::Topology(format!("server slot {index} does not match its net/zero-sharer")));
        }
        Ok(SecureContext {
            index,
            servers,
            net,
            zero,
            codec,
            session: 0,
            round: 0,
        })
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.index
    }

    #[inline]
    pub fn codec(&self) -> FixedCodec {
        self.codec
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    /// Rounds run so far in the current session.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn net(&mut self) -> &mut PartyNet {
        &mut self.net
    }

    pub fn zero(&self) -> &ZeroSharer {
        &self.zero
    }

    /// Start a new protocol session; rounds are numbered from zero within it.
    pub fn begin_session(&mut self, session: u64) {
        self.session = session;
        self.round = 0;
    }

    fn next_id(&self) -> PartyId {
        self.servers[next_server(self.index)]
    }

    fn prev_id(&self) -> PartyId {
        self.servers[prev_server(self.index)]
    }

    fn reshare_frame(&self, kind: WordKind, words: &[RingElement]) -> Result<Frame> {
        let payload = encode_word_payload(self.round, words.len(), 1, kind, words)?;
        Ok(Frame::new(self.session, self.round, FrameKind::Reshare, payload))
    }

    fn read_words(&mut self, from: PartyId, expect: usize) -> Result<Vec<RingElement>> {
        let session = self.session;
        let f = self.net.recv_session(from, session)?;
        if f.kind != FrameKind::Reshare || f.round_no != self.round {
            return Err(Error::transport(
                from,
                self.net.id(),
                format!("expected reshare round {} got {:?} round {}", self.round, f.kind, f.round_no),
            ));
        }
        let (_, words) = decode_word_payload(&f.payload)?;
        if words.len() != expect {
            return Err(Error::Shape(format!("reshare carried {} words, expected {expect}", words.len())));
        }
        Ok(words)
    }

    /// One resharing round: send own words to the previous server, receive
    /// the next server's words.
    pub(crate) fn exchange(&mut self, kind: WordKind, words: Vec<RingElement>) -> Result<Vec<RingElement>> {
        let n = words.len();
        let frame = self.reshare_frame(kind, &words)?;
        let prev = self.prev_id();
        let next = self.next_id();
        self.net.send(prev, frame)?;
        let got = self.read_words(next, n)?;
        self.round += 1;
        Ok(got)
    }

    /// Send this server's view of `x` to `party` for reconstruction there.
    pub fn reveal_to(&mut self, x: &ShareTensor, party: PartyId, tensor_id: u32) -> Result<()> {
        let payload = crate::sharing::encode_share_payload(tensor_id, x)?;
        let frame = Frame::new(self.session, self.round, FrameKind::RevealShares, payload);
        self.net.send(party, frame)
    }
}

/// Three server contexts wired together in one process, for tests, the
/// bench harness, and anything else that wants to run protocols locally.
pub struct LocalTrio {
    contexts: Vec<SecureContext>,
    observer: Arc<NetObserver>,
    servers: [PartyId; 3],
}

impl LocalTrio {
    pub fn new(seed: u64) -> Result<Self> {
        Self::with_codec(seed, FixedCodec::default())
    }

    pub fn with_codec(seed: u64, codec: FixedCodec) -> Result<Self> {
        let topology = PartyTopology::numbered(1)?;
        let mut mesh = connect(&topology, TransportMode::InProcess, MeshOptions::default())?;
        let servers = *topology.servers();
        let zeros = ZeroSharer::setup(seed);
        let mut contexts = Vec::with_capacity(3);
        for (j, z) in zeros.into_iter().enumerate() {
            let net = mesh.take(servers[j])?;
            contexts.push(SecureContext::new(j, servers, net, z, codec)?);
        }
        Ok(LocalTrio {
            contexts,
            observer: mesh.observer(),
            servers,
        })
    }

    pub fn servers(&self) -> [PartyId; 3] {
        self.servers
    }

    pub fn observer(&self) -> &Arc<NetObserver> {
        &self.observer
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.observer.metrics.snapshot()
    }

    /// Run `f` on all three servers concurrently and collect their outputs.
    pub fn run<R, F>(&mut self, f: F) -> Result<[R; 3]>
    where
        R: Send,
        F: Fn(&mut SecureContext) -> Result<R> + Sync,
    {
        let f = &f;
        let results: Vec<Result<R>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .contexts
                .iter_mut()
                .map(|ctx| s.spawn(move || f(ctx)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("server thread panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(3);
        for r in results {
            out.push(r?);
        }
        Ok(out.try_into().ok().expect("three results"))
    }
}
