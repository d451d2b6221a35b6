//! Trained models. The tree structure and leaf weights live with the active
//! party; each split threshold lives only with the party owning the feature.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{BoostParams, Loss};
use crate::data::FeatureFrame;
use crate::error::{Error, Result};
use crate::net::PartyId;

const MODEL_MAGIC: &[u8; 4] = b"PWXG";
const STORE_MAGIC: &[u8; 4] = b"PWXB";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        weight: f64,
    },
    /// `party` indexes [`BoostModel::parties`]; the threshold itself is in
    /// that party's [`BoundaryStore`] under `(tree, node)`.
    Split {
        party: usize,
        feature: usize,
        position: usize,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root; children always come after their parent.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            go(self, 0)
        }
    }

    /// Follow splits from the root; `goes_left(node, party, feature, position)`
    /// decides each one.
    pub fn leaf_weight<F>(&self, mut goes_left: F) -> Result<f64>
    where
        F: FnMut(usize, usize, usize, usize) -> Result<bool>,
    {
        let mut i = 0;
        loop {
            match *self.nodes.get(i).ok_or_else(|| Error::Model(format!("dangling node {i}")))? {
                Node::Leaf { weight } => return Ok(weight),
                Node::Split {
                    party,
                    feature,
                    position,
                    left,
                    right,
                } => i = if goes_left(i, party, feature, position)? { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub params: BoostParams,
    pub base_score: f64,
    /// Parties in split-index order, active first.
    pub parties: Vec<PartyId>,
    pub trees: Vec<Tree>,
}

/// A split threshold held by the owning party.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub feature: usize,
    pub position: usize,
    pub threshold: f64,
}

/// One party's split thresholds, keyed by `(tree, node)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryStore {
    pub party: PartyId,
    pub entries: BTreeMap<(u32, u32), Boundary>,
}

impl BoundaryStore {
    pub fn new(party: PartyId) -> Self {
        BoundaryStore {
            party,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, tree: usize, node: usize, b: Boundary) {
        self.entries.insert((tree as u32, node as u32), b);
    }

    pub fn get(&self, tree: usize, node: usize) -> Result<&Boundary> {
        self.entries
            .get(&(tree as u32, node as u32))
            .ok_or_else(|| Error::Model(format!("{} holds no boundary for tree {tree} node {node}", self.party)))
    }

    /// Does row `i` of `x` go left at `(tree, node)`?
    pub fn goes_left(&self, tree: usize, node: usize, x: &FeatureFrame, i: usize) -> Result<bool> {
        let b = self.get(tree, node)?;
        if b.feature >= x.cols {
            return Err(Error::Shape(format!("boundary on feature {} of a {}-column frame", b.feature, x.cols)));
        }
        Ok(x.at(i, b.feature) <= b.threshold)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(STORE_MAGIC);
        w.u32(self.party.0);
        w.u32(self.entries.len() as u32);
        for (&(t, n), b) in &self.entries {
            w.u32(t);
            w.u32(n);
            w.u32(b.feature as u32);
            w.u32(b.position as u32);
            w.f64(b.threshold);
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, STORE_MAGIC)?;
        let mut s = BoundaryStore::new(PartyId(r.u32()?));
        for _ in 0..r.u32()? {
            let key = (r.u32()?, r.u32()?);
            let b = Boundary {
                feature: r.u32()? as usize,
                position: r.u32()? as usize,
                threshold: r.f64()?,
            };
            s.entries.insert(key, b);
        }
        r.finish()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl BoostModel {
    /// Raw score: base plus `eta` times the sum of reached leaf weights.
    pub fn score_with<F>(&self, mut goes_left: F) -> Result<f64>
    where
        F: FnMut(usize, usize, usize, usize, usize) -> Result<bool>,
    {
        let mut s = 0.0;
        for (t, tree) in self.trees.iter().enumerate() {
            s += tree.leaf_weight(|node, party, f, p| goes_left(t, node, party, f, p))?;
        }
        Ok(self.base_score + self.params.eta * s)
    }

    /// Co-located prediction: `frames[k]` and `stores[k]` belong to
    /// `parties[k]`, all frames aligned row by row.
    pub fn predict(&self, frames: &[&FeatureFrame], stores: &[BoundaryStore]) -> Result<Vec<f64>> {
        if frames.len() != self.parties.len() || stores.len() != self.parties.len() {
            return Err(Error::Shape(format!(
                "model spans {} parties, got {} frames and {} stores",
                self.parties.len(),
                frames.len(),
                stores.len()
            )));
        }
        let rows = frames[0].rows;
        if frames.iter().any(|f| f.rows != rows) {
            return Err(Error::Shape("prediction frames differ in length".into()));
        }
        (0..rows)
            .map(|i| {
                let raw = self.score_with(|t, node, party, _, _| stores[party].goes_left(t, node, frames[party], i))?;
                Ok(self.link(raw))
            })
            .collect()
    }

    /// Output transform of the loss.
    pub fn link(&self, raw: f64) -> f64 {
        match self.params.loss {
            Loss::Squared => raw,
            Loss::Logistic => 1.0 / (1.0 + (-raw).exp()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MODEL_MAGIC);
        let p = &self.params;
        for v in [p.trees, p.depth, p.bins] {
            w.u32(v as u32);
        }
        for v in [p.gamma, p.lambda, p.eta] {
            w.f64(v);
        }
        w.buf.push(p.loss.code());
        w.f64(self.base_score);
        w.u32(self.parties.len() as u32);
        for id in &self.parties {
            w.u32(id.0);
        }
        w.u32(self.trees.len() as u32);
        for t in &self.trees {
            w.u32(t.nodes.len() as u32);
            for n in &t.nodes {
                match *n {
                    Node::Leaf { weight } => {
                        w.buf.push(0);
                        w.f64(weight);
                    }
                    Node::Split {
                        party,
                        feature,
                        position,
                        left,
                        right,
                    } => {
                        w.buf.push(1);
                        for v in [party, feature, position, left, right] {
                            w.u32(v as u32);
                        }
                    }
                }
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, MODEL_MAGIC)?;
        let params = BoostParams {
            trees: r.u32()? as usize,
            depth: r.u32()? as usize,
            bins: r.u32()? as usize,
            gamma: r.f64()?,
            lambda: r.f64()?,
            eta: r.f64()?,
            loss: Loss::from_code(r.u8()?)?,
        };
        let base_score = r.f64()?;
        let parties = (0..r.u32()?).map(|_| r.u32().map(PartyId)).collect::<Result<Vec<_>>>()?;
        let n_trees = r.u32()?;
        let mut trees = Vec::with_capacity(n_trees as usize);
        for _ in 0..n_trees {
            let n = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n);
            for i in 0..n {
                nodes.push(match r.u8()? {
                    0 => Node::Leaf { weight: r.f64()? },
                    1 => {
                        let v = [r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|x| x as usize);
                        if v[0] >= parties.len() || v[3] <= i || v[4] <= i || v[3] >= n || v[4] >= n {
                            return Err(Error::Model(format!("split node {i} points outside its tree")));
                        }
                        Node::Split {
                            party: v[0],
                            feature: v[1],
                            position: v[2],
                            left: v[3],
                            right: v[4],
                        }
                    }
                    tag => return Err(Error::Model(format!("unknown node tag {tag}"))),
                });
            }
            trees.push(Tree { nodes });
        }
        r.finish()?;
        Ok(BoostModel {
            params,
            base_score,
            parties,
            trees,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Human-readable dump for debugging.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Writer { buf }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if buf.len() < 6 || &buf[..4] != magic {
            return Err(Error::Model(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        let v = u16::from_le_bytes([buf[4], buf[5]]);
        if v != VERSION {
            return Err(Error::Model(format!("unsupported version {v}")));
        }
        Ok(Reader { buf, pos: 6 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Model("truncated file".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Model(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (BoostModel, BoundaryStore) {
        let model = BoostModel {
            params: BoostParams::default(),
            base_score: 0.25,
            parties: vec![PartyId(1), PartyId(2)],
            trees: vec![Tree {
                nodes: vec![
                    Node::Split {
                        party: 1,
                        feature: 0,
                        position: 2,
                        left: 1,
                        right: 2,
                    },
                    Node::Leaf { weight: -0.5 },
                    Node::Leaf { weight: 0.5 },
                ],
            }],
        };
        let mut store = BoundaryStore::new(PartyId(2));
        store.insert(
            0,
            0,
            Boundary {
                feature: 0,
                position: 2,
                threshold: 1.5,
            },
        );
        (model, store)
    }

    #[test]
    fn binary_roundtrip() {
        let (m, s) = sample();
        assert_eq!(BoostModel::from_bytes(&m.to_bytes()).unwrap(), m);
        assert_eq!(BoundaryStore::from_bytes(&s.to_bytes()).unwrap(), s);
        assert!(m.to_json().unwrap().contains("\"split\""));
    }

    #[test]
    fn corrupt_files_are_model_errors() {
        let (m, _) = sample();
        let b = m.to_bytes();
        assert!(matches!(BoostModel::from_bytes(&b[..b.len() - 3]), Err(Error::Model(_))));
        assert!(matches!(BoostModel::from_bytes(b"XXXX\x01\x00"), Err(Error::Model(_))));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(BoostModel::from_bytes(&extra), Err(Error::Model(_))));
    }

    #[test]
    fn colocated_prediction() {
        let (m, s) = sample();
        let active = FeatureFrame::from_columns(1, &[vec![0.0, 0.0, 0.0]]);
        let passive = FeatureFrame::from_columns(2, &[vec![1.0, 1.5, 2.0]]);
        let y = m.predict(&[&active, &passive], &[BoundaryStore::new(PartyId(1)), s]).unwrap();
        assert_eq!(y, vec![0.25 - 0.15, 0.25 - 0.15, 0.25 + 0.15]);
        assert_eq!(m.trees[0].depth(), 1);
        assert_eq!(m.trees[0].leaves(), 2);
    }
}
