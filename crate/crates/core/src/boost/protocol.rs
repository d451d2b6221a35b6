//! Federated training and prediction over the party mesh.
//!
//! Per tree the active party shares its gradients with the servers once.
//! Per node it sends the sample space to every passive party, which bins
//! its features locally and shares the one-hot bin matrix with the
//! servers. The servers compute `onehotᵀ · [g h]` in one resharing round
//! and return the shares of the aggregates to the active party, which
//! reconstructs them, scans for the best split, and asks the owner of the
//! winning feature for the left sample set. Labels, gradients and bin
//! values never leave their owner in the clear.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::algo::{aggregate, best_split, gradients, leaf_weight, local_binning_ordered, minus, sample_split, ColumnOrder, Histogram};
use super::model::{Boundary, BoostModel, BoundaryStore, Node, Tree};
use super::oracle::{base_score, check_inputs, SplitRecord, TrainedModel};
use super::params::BoostParams;
use crate::data::FeatureFrame;
use crate::error::{Error, Result};
use crate::net::{connect, AuditReport, Frame, FrameKind, MeshOptions, MetricsSnapshot, PartyId, PartyNet, PartyTopology, TransportMode};
use crate::ring::{FixedCodec, RingElement};
use crate::secure::SecureContext;
use crate::sharing::{decode_share_payload, encode_share_payload, reveal_tensor, share_tensor, ReplicatedShare, ShareTensor, WordKind, ZeroSharer};

/// How servers turn passive bins into per-bin aggregates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Passives share one-hot bin indicators; aggregation is one matrix
    /// product.
    #[default]
    OneHot,
    /// Passives share bin indices; servers derive indicators with a secure
    /// equality test per bin (16 rounds each).
    EqualityCircuit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub codec: FixedCodec,
    /// Seeds the share randomness of every party and the servers' pairwise
    /// keys.
    pub seed: u64,
    pub mode: AggregationMode,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            codec: FixedCodec::default(),
            seed: 0,
            mode: AggregationMode::OneHot,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
enum Control {
    Hello { rows: u64, cols: u64 },
    Tree { tree: u32 },
    Node { session: u64 },
    TreeDone,
    Done,
    Failed { reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRequest {
    feature: u32,
    position: u32,
}

const GRAD_NODE: u64 = u32::MAX as u64;
const PREDICT_BIT: u64 = 1 << 63;
const HELLO_SESSION: u64 = u64::MAX;

pub fn node_session(tree: usize, node: usize) -> u64 {
    ((tree as u64) << 32) | node as u64
}

fn split_session(s: u64) -> (usize, usize) {
    ((s >> 32) as usize, (s & 0xffff_ffff) as usize)
}

fn control(session: u64, c: &Control) -> Frame {
    Frame::new(session, 0, FrameKind::Control, serde_json::to_vec(c).expect("control encodes"))
}

fn parse_control(f: &Frame) -> Result<Control> {
    serde_json::from_slice(&f.payload).map_err(|e| Error::FrameDecode(format!("control payload: {e}")))
}

fn encode_indices(rows: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + rows.len() * 4);
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for &i in rows {
        out.extend_from_slice(&(i as u32).to_le_bytes());
    }
    out
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    let b = buf
        .get(*pos..*pos + 4)
        .ok_or_else(|| Error::FrameDecode("truncated index list".into()))?;
    *pos += 4;
    Ok(u32::from_le_bytes(b.try_into().unwrap()))
}

fn decode_indices(buf: &[u8], pos: &mut usize) -> Result<Vec<usize>> {
    let n = read_u32(buf, pos)? as usize;
    (0..n).map(|_| read_u32(buf, pos).map(|v| v as usize)).collect()
}

/// Turn a peer's `Failed` control frame into an error, or check the kind.
fn expect(f: Frame, kind: FrameKind, from: PartyId, me: PartyId) -> Result<Frame> {
    if f.kind == kind {
        return Ok(f);
    }
    let reason = match (f.kind, parse_control(&f)) {
        (FrameKind::Control, Ok(Control::Failed { reason })) => format!("peer failed: {reason}"),
        _ => format!("expected {kind:?}, got {:?}", f.kind),
    };
    Err(Error::transport(from, me, reason))
}

fn broadcast_failure(net: &mut PartyNet, to: &[PartyId], session: u64, e: &Error) {
    let c = Control::Failed { reason: e.to_string() };
    for &p in to {
        let _ = net.send(p, control(session, &c));
    }
}

fn hconcat(parts: &[ShareTensor]) -> Result<ShareTensor> {
    let rows = parts.first().map_or(0, |t| t.rows());
    if parts.iter().any(|t| t.rows() != rows) {
        return Err(Error::Shape("bin shares of different lengths".into()));
    }
    let cols: usize = parts.iter().map(|t| t.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for t in parts {
            data.extend_from_slice(&t.data()[i * t.cols()..(i + 1) * t.cols()]);
        }
    }
    ShareTensor::new(rows, cols, WordKind::Integer, data)
}

fn party_rng(seed: u64, id: PartyId) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ (u64::from(id.0) << 40) ^ 0x5eed_0000_0000)
}

/// Label owner's side of training. Returns the model with only this
/// party's boundary store filled in (index 0).
pub fn run_active(
    net: &mut PartyNet,
    topology: &PartyTopology,
    frame: &FeatureFrame,
    y: &[f64],
    params: &BoostParams,
    opts: &ProtocolOptions,
) -> Result<TrainedModel> {
    let me = net.id();
    let mut peers: Vec<PartyId> = topology.passives().to_vec();
    peers.extend(topology.servers());
    let r = active_inner(net, topology, frame, y, params, opts);
    match &r {
        Ok(_) => {
            for &p in &peers {
                net.send(p, control(0, &Control::Done))?;
            }
        }
        Err(e) => {
            log::error!("{me}: training failed: {e}");
            broadcast_failure(net, &peers, 0, e);
        }
    }
    r
}

fn active_inner(
    net: &mut PartyNet,
    topology: &PartyTopology,
    frame: &FeatureFrame,
    y: &[f64],
    params: &BoostParams,
    opts: &ProtocolOptions,
) -> Result<TrainedModel> {
    let started = Instant::now();
    let me = net.id();
    let passives = topology.passives().to_vec();
    let servers = *topology.servers();
    let mut parties = vec![me];
    parties.extend(&passives);
    check_inputs(&[frame], &[me], y, params)?;

    let mut passive_cols = Vec::with_capacity(passives.len());
    for &p in &passives {
        let f = expect(net.recv(p)?, FrameKind::Control, p, me)?;
        match parse_control(&f)? {
            Control::Hello { rows, cols } if rows as usize == frame.rows => passive_cols.push(cols as usize),
            Control::Hello { rows, .. } => {
                return Err(Error::Shape(format!("{p} holds {rows} rows, labels cover {}", frame.rows)));
            }
            other => return Err(Error::transport(p, me, format!("expected hello, got {other:?}"))),
        }
    }

    let n = y.len();
    let bins = params.bins;
    let codec = opts.codec;
    let mut rng = party_rng(opts.seed, me);
    let base = base_score(y, params.loss);
    let mut raw = vec![base; n];
    let mut store = BoundaryStore::new(me);
    let mut trees = Vec::with_capacity(params.trees);
    let mut trace = Vec::new();
    let federated = !passives.is_empty();
    let order = ColumnOrder::new(frame);

    for t in 0..params.trees {
        let grad = gradients(y, &raw, params.loss)?.quantized(&codec)?;
        if federated {
            let mut words = Vec::with_capacity(2 * n);
            for i in 0..n {
                words.push(codec.encode(grad.g[i])?);
                words.push(codec.encode(grad.h[i])?);
            }
            let views = share_tensor(&words, n, 2, WordKind::Fixed, &mut rng)?;
            for (j, v) in views.iter().enumerate() {
                net.send(servers[j], control(0, &Control::Tree { tree: t as u32 }))?;
                let payload = encode_share_payload(0, v)?;
                net.send(servers[j], Frame::new(node_session(t, GRAD_NODE as usize), 0, FrameKind::GradientShares, payload))?;
            }
        }

        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut queue = VecDeque::from([(0usize, (0..n).collect::<Vec<usize>>(), 0usize)]);
        while let Some((id, rows, depth)) = queue.pop_front() {
            let s = node_session(t, id);
            let wrap = |e: Error| Error::NodeFailed {
                tree: t,
                node: id,
                source: Box::new(e),
            };
            let mut split = None;
            if depth < params.depth {
                let node = (|| -> Result<Option<(super::algo::SplitChoice, Vec<usize>)>> {
                    if federated {
                        let payload = encode_indices(&rows);
                        for &p in &passives {
                            net.send(p, Frame::new(s, 0, FrameKind::SampleSpace, payload.clone()))?;
                        }
                        for &sv in &servers {
                            net.send(sv, control(s, &Control::Node { session: s }))?;
                        }
                    }
                    let own = local_binning_ordered(frame, &order, &rows, bins)?;
                    let mut hists = vec![aggregate(&own, &grad, bins)];
                    if federated {
                        let mut views = Vec::with_capacity(3);
                        for (j, &sv) in servers.iter().enumerate() {
                            let f = expect(net.recv_session(sv, s)?, FrameKind::AggregateShares, sv, me)?;
                            views.push((j, decode_share_payload(&f.payload)?.1));
                        }
                        let refs: Vec<(usize, &ShareTensor)> = views.iter().map(|(j, v)| (*j, v)).collect();
                        let gh = codec.decode_slice(&reveal_tensor(&refs)?);
                        let total: usize = passive_cols.iter().sum::<usize>() * bins * 2;
                        if gh.len() != total {
                            return Err(Error::Shape(format!("{} aggregates, expected {total}", gh.len())));
                        }
                        let mut at = 0;
                        for &c in &passive_cols {
                            let len = c * bins * 2;
                            hists.push(Histogram::from_pairs(c, bins, &gh[at..at + len])?);
                            at += len;
                        }
                    }
                    let Some(c) = best_split(&hists, params) else {
                        return Ok(None);
                    };
                    let left = if c.party == 0 {
                        let bounds = &own.boundaries[c.feature];
                        let left = sample_split(&rows, |i| frame.at(i, c.feature), bounds, c.position)?;
                        store.insert(
                            t,
                            id,
                            Boundary {
                                feature: c.feature,
                                position: c.position,
                                threshold: bounds[c.position - 1],
                            },
                        );
                        left
                    } else {
                        let owner = passives[c.party - 1];
                        let req = SplitRequest {
                            feature: c.feature as u32,
                            position: c.position as u32,
                        };
                        let body = serde_json::to_vec(&req).expect("request encodes");
                        net.send(owner, Frame::new(s, 0, FrameKind::SplitRequest, body))?;
                        let f = expect(net.recv_session(owner, s)?, FrameKind::LeftSet, owner, me)?;
                        let left = decode_indices(&f.payload, &mut 0)?;
                        let mut it = rows.iter().peekable();
                        let subset = left.windows(2).all(|w| w[0] < w[1])
                            && left.iter().all(|&i| {
                                while it.peek().is_some_and(|&&r| r < i) {
                                    it.next();
                                }
                                it.peek() == Some(&&i)
                            });
                        if !subset {
                            return Err(Error::transport(owner, me, "left set is not a subset of the node"));
                        }
                        left
                    };
                    Ok(Some((c, left)))
                })()
                .map_err(wrap)?;
                split = node;
            }
            match split {
                Some((c, left)) => {
                    let right = minus(&rows, &left);
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    nodes.extend([None, None]);
                    nodes[id] = Some(Node::Split {
                        party: c.party,
                        feature: c.feature,
                        position: c.position,
                        left: l,
                        right: r,
                    });
                    trace.push(SplitRecord { tree: t, node: id, choice: c });
                    queue.push_back((l, left, depth + 1));
                    queue.push_back((r, right, depth + 1));
                }
                None => {
                    let (g, h) = grad.sums(&rows);
                    let w = leaf_weight(g, h, params.lambda);
                    for &i in &rows {
                        raw[i] += params.eta * w;
                    }
                    nodes[id] = Some(Node::Leaf { weight: w });
                }
            }
        }
        for &p in &passives {
            net.send(p, control(0, &Control::TreeDone))?;
        }
        trees.push(Tree {
            nodes: nodes.into_iter().map(|n| n.expect("every queued node resolved")).collect(),
        });
    }
    net.record_phase("train", started);

    let mut stores = vec![store];
    stores.extend(passives.iter().map(|&p| BoundaryStore::new(p)));
    Ok(TrainedModel {
        model: BoostModel {
            params: *params,
            base_score: base,
            parties,
            trees,
        },
        stores,
        trace,
    })
}

/// Feature provider's side of training; returns its boundary store.
pub fn run_passive(
    net: &mut PartyNet,
    topology: &PartyTopology,
    frame: &FeatureFrame,
    params: &BoostParams,
    opts: &ProtocolOptions,
) -> Result<BoundaryStore> {
    let me = net.id();
    let active = topology.active();
    let servers = *topology.servers();
    net.send(
        active,
        control(
            HELLO_SESSION,
            &Control::Hello {
                rows: frame.rows as u64,
                cols: frame.cols as u64,
            },
        ),
    )?;
    let mut rng = party_rng(opts.seed, me);
    let mut store = BoundaryStore::new(me);
    let mut open: HashMap<u64, (Vec<usize>, Vec<Vec<f64>>)> = HashMap::new();
    let bins = params.bins;
    let order = ColumnOrder::new(frame);
    loop {
        let f = net.recv(active)?;
        let s = f.session_id;
        let step = (|| -> Result<bool> {
            match f.kind {
                FrameKind::Control => match parse_control(&f)? {
                    Control::TreeDone => open.clear(),
                    Control::Done => return Ok(false),
                    Control::Failed { reason } => return Err(Error::transport(active, me, format!("peer failed: {reason}"))),
                    other => return Err(Error::transport(active, me, format!("unexpected control {other:?}"))),
                },
                FrameKind::SampleSpace => {
                    let rows = decode_indices(&f.payload, &mut 0)?;
                    let b = local_binning_ordered(frame, &order, &rows, bins)?;
                    let (words, cols) = match opts.mode {
                        AggregationMode::OneHot => {
                            let width = frame.cols * bins;
                            let mut w = vec![RingElement(0); frame.rows * width];
                            for i in 0..frame.rows {
                                for j in 0..frame.cols {
                                    let v = b.bin(i, j);
                                    if v >= 0 {
                                        w[i * width + j * bins + v as usize] = RingElement(1);
                                    }
                                }
                            }
                            (w, width)
                        }
                        AggregationMode::EqualityCircuit => {
                            (b.xbin.iter().map(|&v| RingElement::from_signed(i64::from(v))).collect(), frame.cols)
                        }
                    };
                    let views = share_tensor(&words, frame.rows, cols, WordKind::Integer, &mut rng)?;
                    for (j, v) in views.iter().enumerate() {
                        net.send(servers[j], Frame::new(s, 0, FrameKind::BinShares, encode_share_payload(0, v)?))?;
                    }
                    open.insert(s, (rows, b.boundaries));
                }
                FrameKind::SplitRequest => {
                    let req: SplitRequest =
                        serde_json::from_slice(&f.payload).map_err(|e| Error::FrameDecode(format!("split request: {e}")))?;
                    let (feature, position) = (req.feature as usize, req.position as usize);
                    let (rows, bounds) = open
                        .get(&s)
                        .ok_or_else(|| Error::transport(active, me, format!("split request for unknown session {s:#x}")))?;
                    let col = bounds.get(feature).ok_or(Error::MissingBoundary { feature, position })?;
                    let left = sample_split(rows, |i| frame.at(i, feature), col, position)
                        .map_err(|_| Error::MissingBoundary { feature, position })?;
                    let (t, node) = split_session(s);
                    store.insert(
                        t,
                        node,
                        Boundary {
                            feature,
                            position,
                            threshold: col[position - 1],
                        },
                    );
                    net.send(active, Frame::new(s, 0, FrameKind::LeftSet, encode_indices(&left)))?;
                }
                other => return Err(Error::transport(active, me, format!("unexpected {other:?}"))),
            }
            Ok(true)
        })();
        match step {
            Ok(true) => {}
            Ok(false) => return Ok(store),
            Err(e) => {
                broadcast_failure(net, &[active], s, &e);
                return Err(e);
            }
        }
    }
}

/// Compute server's side of training.
pub fn run_server(ctx: &mut SecureContext, topology: &PartyTopology, params: &BoostParams, opts: &ProtocolOptions) -> Result<()> {
    let active = topology.active();
    let passives = topology.passives().to_vec();
    let me = ctx.net().id();
    let bins = params.bins;
    let mut grads: Option<ShareTensor> = None;
    loop {
        let f = expect(ctx.net().recv(active)?, FrameKind::Control, active, me)?;
        let step = (|| -> Result<bool> {
            match parse_control(&f)? {
                Control::Tree { tree } => {
                    let g = ctx.net().recv_session(active, node_session(tree as usize, GRAD_NODE as usize))?;
                    let g = expect(g, FrameKind::GradientShares, active, me)?;
                    grads = Some(decode_share_payload(&g.payload)?.1);
                }
                Control::Node { session } => {
                    let g = grads
                        .as_ref()
                        .ok_or_else(|| Error::transport(active, me, "node before gradients"))?;
                    ctx.begin_session(session);
                    let mut parts = Vec::with_capacity(passives.len());
                    for &p in &passives {
                        let b = expect(ctx.net().recv_session(p, session)?, FrameKind::BinShares, p, me)?;
                        parts.push(decode_share_payload(&b.payload)?.1);
                    }
                    let x = hconcat(&parts)?;
                    let onehot = match opts.mode {
                        AggregationMode::OneHot => x,
                        AggregationMode::EqualityCircuit => {
                            let (m, c) = x.shape();
                            let mut data = vec![ReplicatedShare::default(); m * c * bins];
                            for b in 0..bins {
                                let eq = ctx.sec_eq_const(&x, RingElement(b as u64))?;
                                for i in 0..m {
                                    for j in 0..c {
                                        data[i * c * bins + j * bins + b] = eq.get(i, j);
                                    }
                                }
                            }
                            ShareTensor::new(m, c * bins, WordKind::Integer, data)?
                        }
                    };
                    let agg = ctx.sec_xt_y_raw(&onehot, g)?;
                    let payload = encode_share_payload(0, &agg)?;
                    let round = ctx.round();
                    ctx.net().send(active, Frame::new(session, round, FrameKind::AggregateShares, payload))?;
                }
                Control::Done => return Ok(false),
                Control::Failed { reason } => {
                    log::debug!("{me}: stopping, active failed: {reason}");
                    return Ok(false);
                }
                other => return Err(Error::transport(active, me, format!("unexpected control {other:?}"))),
            }
            Ok(true)
        })();
        match step {
            Ok(true) => {}
            Ok(false) => return Ok(()),
            Err(e) => {
                let s = ctx.session();
                broadcast_failure(ctx.net(), &[active], s, &e);
                return Err(e);
            }
        }
    }
}

/// Active side of batch prediction. All trees advance one level per round;
/// each passive answers one direction query per level.
pub fn run_active_predict(net: &mut PartyNet, topology: &PartyTopology, model: &BoostModel, store: &BoundaryStore, frame: &FeatureFrame) -> Result<Vec<f64>> {
    let started = Instant::now();
    let me = net.id();
    let passives = topology.passives().to_vec();
    let r = (|| -> Result<Vec<f64>> {
        if model.parties.first() != Some(&me) || model.parties[1..] != passives[..] {
            return Err(Error::Model(format!("model parties {:?} do not match the topology", model.parties)));
        }
        for &p in &passives {
            let f = expect(net.recv(p)?, FrameKind::Control, p, me)?;
            match parse_control(&f)? {
                Control::Hello { rows, .. } if rows as usize == frame.rows => {}
                other => return Err(Error::Shape(format!("{p} not aligned for prediction: {other:?}"))),
            }
        }
        let n = frame.rows;
        let mut cur: Vec<Vec<usize>> = vec![vec![0; n]; model.trees.len()];
        for level in 0.. {
            // per passive: (tree, node) -> rows
            let mut queries: Vec<BTreeMap<(usize, usize), Vec<usize>>> = vec![BTreeMap::new(); passives.len()];
            let mut pending = false;
            for (t, tree) in model.trees.iter().enumerate() {
                for i in 0..n {
                    if let Node::Split { party, left, right, .. } = tree.nodes[cur[t][i]] {
                        pending = true;
                        let node = cur[t][i];
                        if party == 0 {
                            cur[t][i] = if store.goes_left(t, node, frame, i)? { left } else { right };
                        } else {
                            queries[party - 1].entry((t, node)).or_default().push(i);
                        }
                    }
                }
            }
            if !pending {
                break;
            }
            let session = PREDICT_BIT | level as u64;
            for (k, q) in queries.iter().enumerate() {
                if q.is_empty() {
                    continue;
                }
                let mut body = (q.len() as u32).to_le_bytes().to_vec();
                for (&(t, node), rows) in q {
                    body.extend_from_slice(&(t as u32).to_le_bytes());
                    body.extend_from_slice(&(node as u32).to_le_bytes());
                    body.extend(encode_indices(rows));
                }
                net.send(passives[k], Frame::new(session, 0, FrameKind::DirectionQuery, body))?;
            }
            for (k, q) in queries.iter().enumerate() {
                if q.is_empty() {
                    continue;
                }
                let f = expect(net.recv_session(passives[k], session)?, FrameKind::DirectionBits, passives[k], me)?;
                let expected: usize = q.values().map(Vec::len).sum();
                if f.payload.len() != expected {
                    return Err(Error::FrameDecode(format!("{} direction bits for {expected} queries", f.payload.len())));
                }
                let mut bits = f.payload.iter();
                for (&(t, node), rows) in q {
                    let Node::Split { left, right, .. } = model.trees[t].nodes[node] else {
                        unreachable!("queries only target split nodes")
                    };
                    for &i in rows {
                        cur[t][i] = if *bits.next().unwrap() == 1 { left } else { right };
                    }
                }
            }
        }
        let out = (0..n)
            .map(|i| {
                let s: f64 = model
                    .trees
                    .iter()
                    .zip(&cur)
                    .map(|(tree, c)| match tree.nodes[c[i]] {
                        Node::Leaf { weight } => weight,
                        Node::Split { .. } => unreachable!("walk ends on leaves"),
                    })
                    .sum();
                model.link(model.base_score + model.params.eta * s)
            })
            .collect();
        Ok(out)
    })();
    match &r {
        Ok(_) => {
            for &p in &passives {
                net.send(p, control(0, &Control::Done))?;
            }
        }
        Err(e) => broadcast_failure(net, &passives, 0, e),
    }
    net.record_phase("predict", started);
    r
}

/// Passive side of batch prediction: answer direction queries from the
/// active party using this party's thresholds.
pub fn run_passive_predict(net: &mut PartyNet, topology: &PartyTopology, store: &BoundaryStore, frame: &FeatureFrame) -> Result<()> {
    let me = net.id();
    let active = topology.active();
    net.send(
        active,
        control(
            HELLO_SESSION,
            &Control::Hello {
                rows: frame.rows as u64,
                cols: frame.cols as u64,
            },
        ),
    )?;
    loop {
        let f = net.recv(active)?;
        match f.kind {
            FrameKind::Control => match parse_control(&f)? {
                Control::Done => return Ok(()),
                Control::Failed { reason } => return Err(Error::transport(active, me, format!("peer failed: {reason}"))),
                other => return Err(Error::transport(active, me, format!("unexpected control {other:?}"))),
            },
            FrameKind::DirectionQuery => {
                let r = (|| -> Result<Vec<u8>> {
                    let mut pos = 0;
                    let mut bits = Vec::new();
                    for _ in 0..read_u32(&f.payload, &mut pos)? {
                        let t = read_u32(&f.payload, &mut pos)? as usize;
                        let node = read_u32(&f.payload, &mut pos)? as usize;
                        for i in decode_indices(&f.payload, &mut pos)? {
                            if i >= frame.rows {
                                return Err(Error::Shape(format!("query for row {i} of {}", frame.rows)));
                            }
                            bits.push(u8::from(store.goes_left(t, node, frame, i)?));
                        }
                    }
                    Ok(bits)
                })();
                match r {
                    Ok(bits) => net.send(active, Frame::new(f.session_id, 0, FrameKind::DirectionBits, bits))?,
                    Err(e) => {
                        broadcast_failure(net, &[active], f.session_id, &e);
                        return Err(e);
                    }
                }
            }
            other => return Err(Error::transport(active, me, format!("unexpected {other:?}"))),
        }
    }
}

/// Options for running every party of a federation inside this process.
#[derive(Clone, Debug)]
pub struct FederationOptions {
    pub protocol: ProtocolOptions,
    pub transport: TransportMode,
    pub audit: bool,
    pub recv_timeout: Duration,
}

impl Default for FederationOptions {
    fn default() -> Self {
        FederationOptions {
            protocol: ProtocolOptions::default(),
            transport: TransportMode::InProcess,
            audit: false,
            recv_timeout: crate::net::DEFAULT_RECV_TIMEOUT,
        }
    }
}

#[derive(Debug)]
pub struct FederatedRun<T> {
    pub output: T,
    pub metrics: MetricsSnapshot,
    pub audit: Option<AuditReport>,
    pub link_count: usize,
    pub topology: PartyTopology,
}

/// Providers keep their farm ids; servers take the next three ids.
pub fn federation_topology(frames: &[&FeatureFrame]) -> Result<PartyTopology> {
    let first = frames.first().ok_or(Error::EmptySet)?;
    let top = frames.iter().map(|f| f.farm_id).max().unwrap_or(0);
    PartyTopology::new(
        PartyId(first.farm_id),
        frames[1..].iter().map(|f| PartyId(f.farm_id)).collect(),
        (top + 1..=top + 3).map(PartyId).collect(),
    )
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Run the whole federation (active = `frames[0]`) on threads of this
/// process and collect the trained model with every party's thresholds.
pub fn train_federated(frames: &[&FeatureFrame], y: &[f64], params: &BoostParams, opts: &FederationOptions) -> Result<FederatedRun<TrainedModel>> {
    let topology = federation_topology(frames)?;
    check_inputs(frames, &topology.providers(), y, params)?;
    let mut mesh = connect(
        &topology,
        opts.transport.clone(),
        MeshOptions {
            recv_timeout: opts.recv_timeout,
            audit: opts.audit,
        },
    )?;
    let observer = mesh.observer();
    if let Some(a) = observer.audit() {
        for (p, f) in topology.providers().into_iter().zip(frames) {
            let cols: Vec<Vec<f64>> = (0..f.cols).map(|j| f.column(j)).collect();
            a.register_columns(p, &cols, &opts.protocol.codec);
        }
    }
    let mut active_net = mesh.take(topology.active())?;
    let mut passive_nets = topology.passives().iter().map(|&p| mesh.take(p)).collect::<Result<Vec<_>>>()?;
    let servers = *topology.servers();
    let mut contexts = Vec::with_capacity(3);
    for (j, z) in ZeroSharer::setup(opts.protocol.seed).into_iter().enumerate() {
        contexts.push(SecureContext::new(j, servers, mesh.take(servers[j])?, z, opts.protocol.codec)?);
    }
    let proto = &opts.protocol;
    let topo = &topology;

    let (active, passive, server) = std::thread::scope(|s| {
        let server_h: Vec<_> = contexts
            .iter_mut()
            .map(|ctx| s.spawn(move || run_server(ctx, topo, params, proto)))
            .collect();
        let passive_h: Vec<_> = passive_nets
            .iter_mut()
            .zip(&frames[1..])
            .map(|(net, f)| s.spawn(move || run_passive(net, topo, f, params, proto)))
            .collect();
        let active = run_active(&mut active_net, topo, frames[0], y, params, proto);
        let passive: Vec<_> = passive_h.into_iter().map(|h| h.join().expect("passive thread panicked")).collect();
        let server: Vec<_> = server_h.into_iter().map(|h| h.join().expect("server thread panicked")).collect();
        (active, passive, server)
    });
    let mut trained = active?;
    let stores = first_error(passive)?;
    first_error(server)?;
    for (k, st) in stores.into_iter().enumerate() {
        trained.stores[k + 1] = st;
    }
    Ok(FederatedRun {
        output: trained,
        metrics: observer.metrics.snapshot(),
        audit: observer.audit().map(|a| a.report()),
        link_count: mesh.link_count(),
        topology,
    })
}

/// Federated batch prediction with every party in this process.
pub fn predict_federated(
    model: &BoostModel,
    stores: &[BoundaryStore],
    frames: &[&FeatureFrame],
    opts: &FederationOptions,
) -> Result<FederatedRun<Vec<f64>>> {
    let topology = federation_topology(frames)?;
    if stores.len() != frames.len() {
        return Err(Error::Shape(format!("{} stores for {} parties", stores.len(), frames.len())));
    }
    let mut mesh = connect(
        &topology,
        opts.transport.clone(),
        MeshOptions {
            recv_timeout: opts.recv_timeout,
            audit: opts.audit,
        },
    )?;
    let observer = mesh.observer();
    let mut active_net = mesh.take(topology.active())?;
    let mut passive_nets = topology.passives().iter().map(|&p| mesh.take(p)).collect::<Result<Vec<_>>>()?;
    let topo = &topology;
    let (active, passive) = std::thread::scope(|s| {
        let hs: Vec<_> = passive_nets
            .iter_mut()
            .zip(&frames[1..])
            .zip(&stores[1..])
            .map(|((net, f), st)| s.spawn(move || run_passive_predict(net, topo, st, f)))
            .collect();
        let a = run_active_predict(&mut active_net, topo, model, &stores[0], frames[0]);
        let p: Vec<_> = hs.into_iter().map(|h| h.join().expect("passive thread panicked")).collect();
        (a, p)
    });
    let out = active?;
    first_error(passive)?;
    Ok(FederatedRun {
        output: out,
        metrics: observer.metrics.snapshot(),
        audit: observer.audit().map(|a| a.report()),
        link_count: mesh.link_count(),
        topology,
    })
}
