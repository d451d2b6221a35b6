//! One party per process over TCP. Every process reads the same config;
//! providers load only their own farm, align sample indices through the
//! active party, then run the same role functions as the threaded
//! federation.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::boost::{run_active, run_active_predict, run_passive, run_passive_predict, run_server, ProtocolOptions};
use crate::config::RunConfig;
use crate::data::{build_features, ingest_csv, FarmSeries};
use crate::error::{Error, Result};
use crate::metrics::{mae, rmse};
use crate::net::{join_tcp, Frame, FrameKind, MeshOptions, PartyId, PartyNet, PartyTopology, Role, DEFAULT_RECV_TIMEOUT};
use crate::pipeline::load_series;
use crate::ring::FixedCodec;
use crate::secure::SecureContext;
use crate::sharing::ZeroSharer;

const ALIGN_SESSION: u64 = u64::MAX - 1;

/// Farm ids known to the config: the listed CSVs, or the synthetic cluster.
pub fn farm_ids(cfg: &RunConfig) -> Result<Vec<u32>> {
    if cfg.data.farms.is_empty() {
        Ok(load_series(cfg)?.iter().map(|s| s.farm_id).collect())
    } else {
        Ok(cfg.data.farms.iter().map(|f| f.id).collect())
    }
}

/// Active = the target farm (default the last), passives = the configured
/// participants (default every other farm), servers = `topology.servers` or
/// the three ids after the largest participating farm.
pub fn party_topology(cfg: &RunConfig, farms: &[u32]) -> Result<PartyTopology> {
    let active = match cfg.data.target {
        Some(t) if farms.contains(&t) => t,
        Some(t) => return Err(Error::Config(format!("target farm {t} not among the configured farms"))),
        None => *farms.last().ok_or(Error::EmptySet)?,
    };
    let chosen = cfg.selection.participants.clone().unwrap_or_else(|| farms.to_vec());
    if let Some(bad) = chosen.iter().find(|p| !farms.contains(p)) {
        return Err(Error::Config(format!("participant {bad} is not a configured farm")));
    }
    let passives: Vec<PartyId> = chosen.iter().filter(|&&p| p != active).map(|&p| PartyId(p)).collect();
    let servers: Vec<PartyId> = if cfg.topology.servers.is_empty() {
        let top = chosen.iter().copied().chain([active]).max().unwrap_or(active);
        (top + 1..=top + 3).map(PartyId).collect()
    } else {
        cfg.topology.servers.iter().map(|&s| PartyId(s)).collect()
    };
    PartyTopology::new(PartyId(active), passives, servers)
}

/// Resolve `topology.addresses` for every party of `topology`.
pub fn party_addresses(cfg: &RunConfig, topology: &PartyTopology) -> Result<BTreeMap<PartyId, SocketAddr>> {
    let mut out = BTreeMap::new();
    for p in topology.all() {
        let text = cfg
            .topology
            .addresses
            .get(&p.0.to_string())
            .ok_or_else(|| Error::Config(format!("no address for party {}", p.0)))?;
        let addr = text
            .to_socket_addrs()
            .map_err(|e| Error::Config(format!("address {text}: {e}")))?
            .next()
            .ok_or_else(|| Error::Config(format!("address {text} resolves to nothing")))?;
        out.insert(p, addr);
    }
    Ok(out)
}

/// What one party process reports when it finishes.
#[derive(Clone, Debug, Serialize)]
pub struct PartyReport {
    pub id: u32,
    pub role: String,
    pub rows: usize,
    /// Rows after the train/test cut, scored by the active party.
    pub test_rows: usize,
    pub train_seconds: f64,
    pub predict_seconds: f64,
    /// Bytes this party sent.
    pub bytes_on_wire: u64,
    /// Filled in by the active party only.
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    #[serde(skip)]
    pub predictions: Option<Vec<(i64, f64, f64)>>,
}

/// Join the mesh as `me` and play that party's role for one horizon.
pub fn run_party(cfg: &RunConfig, me: u32, horizon: usize) -> Result<PartyReport> {
    let farms = farm_ids(cfg)?;
    let topology = party_topology(cfg, &farms)?;
    let me = PartyId(me);
    let role = topology
        .role(me)
        .ok_or_else(|| Error::Config(format!("party {} has no role in this federation", me.0)))?;
    let addrs = party_addresses(cfg, &topology)?;
    let listener = TcpListener::bind(addrs[&me]).map_err(|e| Error::transport(me, me, format!("bind {}: {e}", addrs[&me])))?;
    let recv_timeout = cfg.topology.recv_timeout_secs.map_or(DEFAULT_RECV_TIMEOUT, Duration::from_secs);
    let mut net = join_tcp(
        &topology,
        me,
        listener,
        &addrs,
        MeshOptions {
            recv_timeout,
            audit: cfg.protocol.audit,
        },
    )?;
    let proto = ProtocolOptions {
        codec: FixedCodec::new(cfg.protocol.frac_bits)?,
        seed: cfg.seed,
        mode: cfg.protocol.aggregation,
    };
    let mut report = PartyReport {
        id: me.0,
        role: role_name(role).into(),
        rows: 0,
        test_rows: 0,
        train_seconds: 0.0,
        predict_seconds: 0.0,
        bytes_on_wire: 0,
        rmse: None,
        mae: None,
        predictions: None,
    };

    match role {
        Role::Server(j) => {
            let servers = *topology.servers();
            let zero = ZeroSharer::setup(cfg.seed).into_iter().nth(j).expect("three servers");
            let mut ctx = SecureContext::new(j, servers, net, zero, proto.codec)?;
            let started = Instant::now();
            run_server(&mut ctx, &topology, &cfg.boost, &proto)?;
            report.train_seconds = started.elapsed().as_secs_f64();
            report.bytes_on_wire = ctx.net().observer().metrics.snapshot().total_bytes();
        }
        Role::Active => {
            let own = own_series(cfg, me)?;
            let (x, labels) = build_features(&own, &cfg.features.spec(), &[horizon])?;
            let index = align_active(&mut net, &topology, &x.sample_index)?;
            let x = x.select(&index)?;
            let y = labels.select(&index)?.horizon(horizon)?.to_vec();
            let cut = cut_row(x.rows, cfg.data.train_fraction)?;
            let (train, test) = (x.rows_range(0, cut), x.rows_range(cut, x.rows));
            report.rows = x.rows;
            report.test_rows = x.rows - cut;
            let started = Instant::now();
            let trained = run_active(&mut net, &topology, &train, &y[..cut], &cfg.boost, &proto)?;
            report.train_seconds = started.elapsed().as_secs_f64();
            let started = Instant::now();
            let pred = run_active_predict(&mut net, &topology, &trained.model, &trained.stores[0], &test)?;
            report.predict_seconds = started.elapsed().as_secs_f64();
            report.rmse = Some(rmse(&y[cut..], &pred)?);
            report.mae = Some(mae(&y[cut..], &pred)?);
            report.predictions = Some(test.sample_index.iter().zip(&pred).zip(&y[cut..]).map(|((&t, &p), &a)| (t, p, a)).collect());
            report.bytes_on_wire = net.observer().metrics.snapshot().total_bytes();
        }
        Role::Passive => {
            let own = own_series(cfg, me)?;
            let (x, _) = build_features(&own, &cfg.features.spec(), &[horizon])?;
            let index = align_passive(&mut net, &topology, &x.sample_index)?;
            let x = x.select(&index)?;
            let cut = cut_row(x.rows, cfg.data.train_fraction)?;
            report.rows = x.rows;
            report.test_rows = x.rows - cut;
            let started = Instant::now();
            let store = run_passive(&mut net, &topology, &x.rows_range(0, cut), &cfg.boost, &proto)?;
            report.train_seconds = started.elapsed().as_secs_f64();
            let started = Instant::now();
            run_passive_predict(&mut net, &topology, &store, &x.rows_range(cut, x.rows))?;
            report.predict_seconds = started.elapsed().as_secs_f64();
            report.bytes_on_wire = net.observer().metrics.snapshot().total_bytes();
        }
    }
    Ok(report)
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Active => "active",
        Role::Passive => "passive",
        Role::Server(_) => "server",
    }
}

fn own_series(cfg: &RunConfig, me: PartyId) -> Result<FarmSeries> {
    match cfg.data.farms.iter().find(|f| f.id == me.0) {
        Some(f) => ingest_csv(&f.path, f.id, f.capacity),
        // the synthetic cluster is regenerated from the seed and all but
        // this farm dropped
        None => load_series(cfg)?
            .into_iter()
            .find(|s| s.farm_id == me.0)
            .ok_or_else(|| Error::Config(format!("no data for farm {}", me.0))),
    }
}

fn cut_row(rows: usize, fraction: f64) -> Result<usize> {
    let cut = (rows as f64 * fraction).round() as usize;
    if cut == 0 || cut >= rows {
        return Err(Error::Length(format!("{rows} aligned rows leave an empty train or test split")));
    }
    Ok(cut)
}

fn index_frame(index: &[i64]) -> Frame {
    let payload = index.iter().flat_map(|t| t.to_le_bytes()).collect();
    Frame::new(ALIGN_SESSION, 0, FrameKind::Control, payload)
}

fn parse_index(f: &Frame) -> Result<Vec<i64>> {
    if f.kind != FrameKind::Control || f.session_id != ALIGN_SESSION || f.payload.len() % 8 != 0 {
        return Err(Error::FrameDecode(format!("expected a sample index, got {:?} in session {}", f.kind, f.session_id)));
    }
    Ok(f.payload.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Intersect every provider's timestamps and hand the result back.
fn align_active(net: &mut PartyNet, topology: &PartyTopology, own: &[i64]) -> Result<Vec<i64>> {
    let mut common: BTreeSet<i64> = own.iter().copied().collect();
    for &p in topology.passives() {
        let theirs: BTreeSet<i64> = parse_index(&net.recv(p)?)?.into_iter().collect();
        common = common.intersection(&theirs).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let index: Vec<i64> = common.into_iter().collect();
    for &p in topology.passives() {
        net.send(p, index_frame(&index))?;
    }
    Ok(index)
}

fn align_passive(net: &mut PartyNet, topology: &PartyTopology, own: &[i64]) -> Result<Vec<i64>> {
    let active = topology.active();
    net.send(active, index_frame(own))?;
    parse_index(&net.recv(active)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_from_config() {
        let mut cfg = RunConfig::default();
        cfg.data.target = Some(3);
        cfg.selection.participants = Some(vec![1, 3, 5]);
        let t = party_topology(&cfg, &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(t.active(), PartyId(3));
        assert_eq!(t.passives(), &[PartyId(1), PartyId(5)]);
        assert_eq!(t.servers(), &[PartyId(6), PartyId(7), PartyId(8)]);
        cfg.data.target = Some(9);
        assert!(matches!(party_topology(&cfg, &[1, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn missing_address_is_a_config_error() {
        let cfg = RunConfig::default();
        let t = PartyTopology::numbered(1).unwrap();
        assert!(matches!(party_addresses(&cfg, &t), Err(Error::Config(_))));
    }

    #[test]
    fn index_frames_roundtrip() {
        let idx = vec![-5, 0, 900, i64::MAX];
        assert_eq!(parse_index(&index_frame(&idx)).unwrap(), idx);
        let other = Frame::new(0, 0, FrameKind::Control, vec![0; 8]);
        assert!(parse_index(&other).is_err());
    }
}
