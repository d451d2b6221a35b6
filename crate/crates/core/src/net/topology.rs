use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub u32);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Active,
    Passive,
    Server(usize),
}

/// Who takes part in a run: the label-owning active party, the passive
/// feature providers, and the three compute servers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyTopology {
    active: PartyId,
    passives: Vec<PartyId>,
    servers: [PartyId; 3],
}

impl PartyTopology {
    pub fn new(active: PartyId, passives: Vec<PartyId>, servers: Vec<PartyId>) -> Result<Self> {
        let servers: [PartyId; 3] = servers
            .try_into()
            .map_err(|v: Vec<PartyId>| Error::Topology(format!("exactly 3 servers required, got {}", v.len())))?;
        let mut seen = BTreeSet::new();
        for id in std::iter::once(active).chain(passives.iter().copied()).chain(servers) {
            if !seen.insert(id) {
                return Err(Error::Topology(format!("duplicate party id {id}")));
            }
        }
        Ok(PartyTopology {
            active,
            passives,
            servers,
        })
    }

    /// Farms `1..=m` with farm 1 active, servers numbered after them.
    pub fn numbered(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Topology("at least one participant required".into()));
        }
        let m = m as u32;
        PartyTopology::new(
            PartyId(1),
            (2..=m).map(PartyId).collect(),
            (m + 1..=m + 3).map(PartyId).collect(),
        )
    }

    pub fn active(&self) -> PartyId {
        self.active
    }

    pub fn passives(&self) -> &[PartyId] {
        &self.passives
    }

    pub fn servers(&self) -> &[PartyId; 3] {
        &self.servers
    }

    /// Data providers in party order: active first.
    pub fn providers(&self) -> Vec<PartyId> {
        std::iter::once(self.active)
            .chain(self.passives.iter().copied())
            .collect()
    }

    /// Number of participating farms `m`.
    pub fn m(&self) -> usize {
        1 + self.passives.len()
    }

    pub fn role(&self, id: PartyId) -> Option<Role> {
        if id == self.active {
            Some(Role::Active)
        } else if self.passives.contains(&id) {
            Some(Role::Passive)
        } else {
            self.servers.iter().position(|&s| s == id).map(Role::Server)
        }
    }

    pub fn all(&self) -> Vec<PartyId> {
        let mut v = self.providers();
        v.extend(self.servers);
        v
    }

    /// Undirected links: server full mesh, every provider to every server,
    /// and every provider to the active party (the active party's own lane
    /// is a loopback used for self-addressed owner requests).
    pub fn links(&self) -> Vec<(PartyId, PartyId)> {
        let mut out = Vec::new();
        for a in 0..3 {
            for b in a + 1..3 {
                out.push((self.servers[a], self.servers[b]));
            }
        }
        for p in self.providers() {
            for s in self.servers {
                out.push((p, s));
            }
        }
        for p in self.providers() {
            out.push((p, self.active));
        }
        out
    }
}
