use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::Duration;

use serde::Serialize;

use super::frame::{Frame, FrameKind};
use super::PartyId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub frames: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

/// Counters shared by every endpoint of a mesh. Only ever incremented.
#[derive(Debug, Default)]
pub struct MeshMetrics {
    links: Mutex<BTreeMap<(PartyId, PartyId), LinkStats>>,
    kinds: Mutex<BTreeMap<(PartyId, PartyId, u8), LinkStats>>,
    rounds: Mutex<BTreeMap<u64, BTreeSet<u32>>>,
    phases: Mutex<Vec<PhaseTiming>>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct MetricsSnapshot {
    /// Per directed link `(from, to)`.
    pub links: BTreeMap<(PartyId, PartyId), LinkStats>,
    /// Per directed link and frame kind.
    pub kinds: BTreeMap<(PartyId, PartyId, u8), LinkStats>,
    /// Distinct protocol rounds observed on server-to-server traffic, per session.
    pub rounds: BTreeMap<u64, usize>,
    pub phases: Vec<PhaseTiming>,
}

impl MeshMetrics {
    pub(crate) fn record(&self, from: PartyId, to: PartyId, frame: &Frame) {
        let bytes = frame.wire_len() as u64;
        {
            let mut links = self.links.lock().unwrap();
            let e = links.entry((from, to)).or_default();
            e.frames += 1;
            e.bytes += bytes;
        }
        {
            let mut kinds = self.kinds.lock().unwrap();
            let e = kinds.entry((from, to, frame.kind as u8)).or_default();
            e.frames += 1;
            e.bytes += bytes;
        }
        if frame.kind == FrameKind::Reshare {
            self.rounds
                .lock()
                .unwrap()
                .entry(frame.session_id)
                .or_default()
                .insert(frame.round_no);
        }
    }

    pub fn record_phase(&self, phase: impl Into<String>, elapsed: Duration) {
        self.phases.lock().unwrap().push(PhaseTiming {
            phase: phase.into(),
            seconds: elapsed.as_secs_f64(),
        });
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            links: self.links.lock().unwrap().clone(),
            kinds: self.kinds.lock().unwrap().clone(),
            rounds: self
                .rounds
                .lock()
                .unwrap()
                .iter()
                .map(|(s, r)| (*s, r.len()))
                .collect(),
            phases: self.phases.lock().unwrap().clone(),
        }
    }
}

impl MetricsSnapshot {
    pub fn link(&self, from: PartyId, to: PartyId) -> LinkStats {
        self.links.get(&(from, to)).copied().unwrap_or_default()
    }

    pub fn kind(&self, from: PartyId, to: PartyId, kind: FrameKind) -> LinkStats {
        self.kinds
            .get(&(from, to, kind as u8))
            .copied()
            .unwrap_or_default()
    }

    /// Frames exchanged among the given parties (e.g. the three servers).
    pub fn frames_among(&self, parties: &[PartyId]) -> u64 {
        self.links
            .iter()
            .filter(|((a, b), _)| parties.contains(a) && parties.contains(b))
            .map(|(_, s)| s.frames)
            .sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.links.values().map(|s| s.bytes).sum()
    }

    /// Element-wise difference `self - earlier`, for measuring one operation.
    pub fn since(&self, earlier: &MetricsSnapshot) -> MetricsSnapshot {
        let links = self
            .links
            .iter()
            .map(|(k, v)| {
                let e = earlier.links.get(k).copied().unwrap_or_default();
                (
                    *k,
                    LinkStats {
                        frames: v.frames - e.frames,
                        bytes: v.bytes - e.bytes,
                    },
                )
            })
            .filter(|(_, v)| v.frames > 0)
            .collect();
        let kinds = self
            .kinds
            .iter()
            .map(|(k, v)| {
                let e = earlier.kinds.get(k).copied().unwrap_or_default();
                (
                    *k,
                    LinkStats {
                        frames: v.frames - e.frames,
                        bytes: v.bytes - e.bytes,
                    },
                )
            })
            .filter(|(_, v)| v.frames > 0)
            .collect();
        let rounds = self
            .rounds
            .iter()
            .filter(|(s, n)| earlier.rounds.get(s) != Some(n))
            .map(|(s, n)| (*s, *n - earlier.rounds.get(s).copied().unwrap_or(0)))
            .collect();
        MetricsSnapshot {
            links,
            kinds,
            rounds,
            phases: self.phases[earlier.phases.len().min(self.phases.len())..].to_vec(),
        }
    }
}
