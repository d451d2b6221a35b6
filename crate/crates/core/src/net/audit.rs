//! Transport-level information-flow audit.
//!
//! Every frame is classified by sender and receiver role. Servers may only
//! receive shares and control traffic; passive parties may never receive
//! labels or gradients in any form; the active party may only receive
//! aggregated shares, left sample sets and direction bits. Frames a
//! provider sends to a server are additionally scanned for verbatim copies
//! of that provider's plaintext feature columns.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::Serialize;

use super::frame::{Frame, FrameKind};
use super::topology::{PartyTopology, Role};
use super::PartyId;
use crate::ring::FixedCodec;

/// Leading values of a column compared against frame payloads.
const NEEDLE_WORDS: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub plaintext_feature_to_server: u64,
    pub forbidden_kind_to_server: u64,
    pub label_or_gradient_to_passive: u64,
    pub forbidden_kind_to_passive: u64,
    pub unexpected_to_active: u64,
    pub frames_inspected: u64,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.plaintext_feature_to_server == 0
            && self.forbidden_kind_to_server == 0
            && self.label_or_gradient_to_passive == 0
            && self.forbidden_kind_to_passive == 0
            && self.unexpected_to_active == 0
    }
}

#[derive(Debug)]
pub struct Audit {
    topology: PartyTopology,
    /// Per provider: first word of a needle -> full needles starting with it.
    needles: Mutex<HashMap<PartyId, HashMap<u64, Vec<Vec<u64>>>>>,
    report: Mutex<AuditReport>,
    violations: Mutex<BTreeMap<String, u64>>,
}

impl Audit {
    pub fn new(topology: PartyTopology) -> Self {
        Audit {
            topology,
            needles: Mutex::new(HashMap::new()),
            report: Mutex::new(AuditReport::default()),
            violations: Mutex::new(BTreeMap::new()),
        }
    }

    /// Register a provider's plaintext columns so that frames carrying them
    /// verbatim (as f64 bits or as fixed-point words) are caught.
    pub fn register_columns(&self, provider: PartyId, columns: &[Vec<f64>], codec: &FixedCodec) {
        let mut needles = self.needles.lock().unwrap();
        let entry = needles.entry(provider).or_default();
        for col in columns {
            let n = col.len().min(NEEDLE_WORDS);
            if n == 0 {
                continue;
            }
            let bits: Vec<u64> = col[..n].iter().map(|v| v.to_bits()).collect();
            entry.entry(bits[0]).or_default().push(bits);
            if let Ok(words) = codec.encode_slice(&col[..n]) {
                let words: Vec<u64> = words.iter().map(|w| w.0).collect();
                entry.entry(words[0]).or_default().push(words);
            }
        }
    }

    fn contains_column(&self, provider: PartyId, payload: &[u8]) -> bool {
        let needles = self.needles.lock().unwrap();
        let Some(table) = needles.get(&provider) else {
            return false;
        };
        // Scan every byte alignment so headers of any length are covered.
        for align in 0..8 {
            let words: Vec<u64> = payload[align.min(payload.len())..]
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            for (i, w) in words.iter().enumerate() {
                if let Some(cands) = table.get(w) {
                    for needle in cands {
                        let plain = words.get(i..i + needle.len()) == Some(needle.as_slice());
                        let paired = needle
                            .iter()
                            .enumerate()
                            .all(|(k, v)| words.get(i + 2 * k) == Some(v));
                        if plain || (needle.len() > 1 && paired) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    fn flag(&self, what: &str, from: PartyId, to: PartyId, kind: FrameKind) {
        log::warn!("audit: {what} {from}->{to} {kind:?}");
        *self
            .violations
            .lock()
            .unwrap()
            .entry(format!("{what} {from}->{to} {kind:?}"))
            .or_default() += 1;
    }

    pub(crate) fn inspect(&self, from: PartyId, to: PartyId, frame: &Frame) {
        use FrameKind::*;
        let from_role = self.topology.role(from);
        let to_role = self.topology.role(to);
        let mut r = self.report.lock().unwrap();
        r.frames_inspected += 1;
        match to_role {
            Some(Role::Server(_)) => {
                let allowed = match frame.kind {
                    Control => true,
                    GradientShares => from_role == Some(Role::Active),
                    BinShares => matches!(from_role, Some(Role::Active | Role::Passive)),
                    Reshare => matches!(from_role, Some(Role::Server(_))),
                    _ => false,
                };
                if !allowed {
                    r.forbidden_kind_to_server += 1;
                    drop(r);
                    self.flag("forbidden kind to server", from, to, frame.kind);
                    return;
                }
                if matches!(from_role, Some(Role::Active | Role::Passive)) && self.contains_column(from, &frame.payload) {
                    r.plaintext_feature_to_server += 1;
                    drop(r);
                    self.flag("plaintext feature to server", from, to, frame.kind);
                }
            }
            Some(Role::Passive) => match frame.kind {
                GradientShares | PlainLabels | PlainGradients | AggregateShares => {
                    r.label_or_gradient_to_passive += 1;
                    drop(r);
                    self.flag("label/gradient to passive", from, to, frame.kind);
                }
                Control | SampleSpace | SplitRequest | DirectionQuery => {}
                _ => {
                    r.forbidden_kind_to_passive += 1;
                    drop(r);
                    self.flag("forbidden kind to passive", from, to, frame.kind);
                }
            },
            Some(Role::Active) => {
                let loopback = from == to;
                let ok = match frame.kind {
                    AggregateShares | RevealShares => matches!(from_role, Some(Role::Server(_))),
                    LeftSet | DirectionBits => matches!(from_role, Some(Role::Active | Role::Passive)),
                    Control => true,
                    SplitRequest | DirectionQuery => loopback,
                    _ => false,
                };
                if !ok {
                    r.unexpected_to_active += 1;
                    drop(r);
                    self.flag("unexpected frame to active", from, to, frame.kind);
                }
            }
            None => {}
        }
    }

    pub fn report(&self) -> AuditReport {
        *self.report.lock().unwrap()
    }

    pub fn violations(&self) -> BTreeMap<String, u64> {
        self.violations.lock().unwrap().clone()
    }
}
