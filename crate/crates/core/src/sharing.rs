//! 2-out-of-3 replicated additive secret sharing over Z/2^64.
//!
//! A secret `x = x_0 + x_1 + x_2 (mod 2^64)` is held as pairs: server `j`
//! keeps `(x_j, x_{j+1})` with indices taken mod 3. Any two servers see all
//! three components; a single server sees two uniformly random words.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RingElement;

pub const SERVERS: usize = 3;

#[inline]
pub fn next_server(j: usize) -> usize {
    (j + 1) % SERVERS
}

#[inline]
pub fn prev_server(j: usize) -> usize {
    (j + SERVERS - 1) % SERVERS
}

/// One server's view of a shared word: `(x_j, x_{j+1})`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicatedShare(pub RingElement, pub RingElement);

impl ReplicatedShare {
    /// Server `server`'s view of the public constant `c`, placed in component 0.
    #[inline]
    pub fn public(c: RingElement, server: usize) -> Self {
        match server {
            0 => ReplicatedShare(c, RingElement::ZERO),
            1 => ReplicatedShare(RingElement::ZERO, RingElement::ZERO),
            _ => ReplicatedShare(RingElement::ZERO, c),
        }
    }
}

/// How the words of a tensor are to be interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum WordKind {
    /// Fixed-point reals scaled by 2^f.
    Fixed = 0,
    /// Unscaled ring integers (flags, bin indices).
    Integer = 1,
    /// XOR-shared bit vectors.
    Boolean = 2,
}

impl WordKind {
    pub fn from_u8(b: u8) -> Result<Self> {
        match b {
            0 => Ok(WordKind::Fixed),
            1 => Ok(WordKind::Integer),
            2 => Ok(WordKind::Boolean),
            other => Err(Error::FrameDecode(format!("unknown word kind {other}"))),
        }
    }
}

/// One server's view of a row-major matrix of shared words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareTensor {
    rows: usize,
    cols: usize,
    kind: WordKind,
    data: Vec<ReplicatedShare>,
}

impl ShareTensor {
    pub fn new(rows: usize, cols: usize, kind: WordKind, data: Vec<ReplicatedShare>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} words for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(ShareTensor { rows, cols, kind, data })
    }

    pub fn zeros(rows: usize, cols: usize, kind: WordKind) -> Self {
        ShareTensor {
            rows,
            cols,
            kind,
            data: vec![ReplicatedShare::default(); rows * cols],
        }
    }

    /// Server `server`'s view of a public tensor.
    pub fn public(values: &[RingElement], rows: usize, cols: usize, kind: WordKind, server: usize) -> Result<Self> {
        let data = values.iter().map(|&c| ReplicatedShare::public(c, server)).collect();
        ShareTensor::new(rows, cols, kind, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn kind(&self) -> WordKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: WordKind) -> Self {
        self.kind = kind;
        self
    }

    #[inline]
    pub fn data(&self) -> &[ReplicatedShare] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [ReplicatedShare] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<ReplicatedShare> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> ReplicatedShare {
        self.data[r * self.cols + c]
    }

    pub fn firsts(&self) -> impl Iterator<Item = RingElement> + '_ {
        self.data.iter().map(|s| s.0)
    }

    pub fn seconds(&self) -> impl Iterator<Item = RingElement> + '_ {
        self.data.iter().map(|s| s.1)
    }

    pub fn ensure_same_shape(&self, other: &ShareTensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Split `x` into three replicated views. `x_0, x_1` are uniform,
/// `x_2 = x - x_0 - x_1`; server `j` receives `(x_j, x_{j+1})`.
pub fn share<R: RngCore + ?Sized>(x: RingElement, rng: &mut R) -> [ReplicatedShare; 3] {
    let x0 = RingElement(rng.random());
    let x1 = RingElement(rng.random());
    let x2 = x - x0 - x1;
    [
        ReplicatedShare(x0, x1),
        ReplicatedShare(x1, x2),
        ReplicatedShare(x2, x0),
    ]
}

/// XOR analogue of [`share`] for bit vectors.
pub fn share_xor<R: RngCore + ?Sized>(x: u64, rng: &mut R) -> [ReplicatedShare; 3] {
    let x0: u64 = rng.random();
    let x1: u64 = rng.random();
    let x2 = x ^ x0 ^ x1;
    let (a, b, c) = (RingElement(x0), RingElement(x1), RingElement(x2));
    [ReplicatedShare(a, b), ReplicatedShare(b, c), ReplicatedShare(c, a)]
}

/// Share every element of a row-major matrix; returns the three server views.
pub fn share_tensor<R: RngCore + ?Sized>(
    values: &[RingElement],
    rows: usize,
    cols: usize,
    kind: WordKind,
    rng: &mut R,
) -> Result<[ShareTensor; 3]> {
    if values.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} values for a {rows}x{cols} tensor",
            values.len()
        )));
    }
    let mut views: [Vec<ReplicatedShare>; 3] = Default::default();
    for v in views.iter_mut() {
        v.reserve(values.len());
    }
    for &x in values {
        let s = if kind == WordKind::Boolean {
            share_xor(x.0, rng)
        } else {
            share(x, rng)
        };
        for (view, pair) in views.iter_mut().zip(s) {
            view.push(pair);
        }
    }
    let [a, b, c] = views;
    Ok([
        ShareTensor { rows, cols, kind, data: a },
        ShareTensor { rows, cols, kind, data: b },
        ShareTensor { rows, cols, kind, data: c },
    ])
}

/// Reconstruct from the views of at least two distinct servers, checking
/// that every replicated component agrees.
pub fn reveal(views: &[(usize, ReplicatedShare)]) -> Result<RingElement> {
    let mut comps: [Option<RingElement>; 3] = [None; 3];
    let mut seen = [false; 3];
    for &(j, ReplicatedShare(a, b)) in views {
        if j >= SERVERS {
            return Err(Error::Param(format!("server index {j}")));
        }
        seen[j] = true;
        for (idx, w) in [(j, a), (next_server(j), b)] {
            match comps[idx] {
                Some(prev) if prev != w => return Err(Error::Inconsistency { index: 0 }),
                _ => comps[idx] = Some(w),
            }
        }
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Param("reveal needs two distinct servers".into()));
    }
    Ok(comps.iter().map(|c| c.expect("two servers cover all components")).sum())
}

/// Element-wise [`reveal`] on tensors; arithmetic or XOR by the tensor kind.
pub fn reveal_tensor(views: &[(usize, &ShareTensor)]) -> Result<Vec<RingElement>> {
    let first = views
        .first()
        .ok_or_else(|| Error::Param("reveal needs two distinct servers".into()))?
        .1;
    for (_, t) in views {
        first.ensure_same_shape(t)?;
    }
    let boolean = first.kind() == WordKind::Boolean;
    let mut out = Vec::with_capacity(first.len());
    let mut buf = Vec::with_capacity(views.len());
    for i in 0..first.len() {
        buf.clear();
        buf.extend(views.iter().map(|(j, t)| (*j, t.data[i])));
        let v = if boolean {
            reveal_xor(&buf)
        } else {
            reveal(&buf)
        }
        .map_err(|e| match e {
            Error::Inconsistency { .. } => Error::Inconsistency { index: i },
            other => other,
        })?;
        out.push(v);
    }
    Ok(out)
}

fn reveal_xor(views: &[(usize, ReplicatedShare)]) -> Result<RingElement> {
    let mut comps: [Option<u64>; 3] = [None; 3];
    let mut seen = [false; 3];
    for &(j, ReplicatedShare(a, b)) in views {
        seen[j] = true;
        for (idx, w) in [(j, a.0), (next_server(j), b.0)] {
            match comps[idx] {
                Some(prev) if prev != w => return Err(Error::Inconsistency { index: 0 }),
                _ => comps[idx] = Some(w),
            }
        }
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Param("reveal needs two distinct servers".into()));
    }
    Ok(RingElement(comps.iter().fold(0, |acc, c| acc ^ c.unwrap())))
}

/// PRF domains, one ChaCha stream each.
const STREAM_ZERO_ARITH: u64 = 0;
const STREAM_ZERO_XOR: u64 = 1;
const STREAM_PAIR: u64 = 2;

/// Correlated randomness for one server.
///
/// Server `j` shares seed `s_j` with server `j+1`. Its zero-share at counter
/// `c` is `α_j = PRF(s_j, c) - PRF(s_{j-1}, c)`, so the three values telescope
/// to zero while each is computable without communication.
#[derive(Debug)]
pub struct ZeroSharer {
    index: usize,
    own: [u8; 32],
    prev: [u8; 32],
    counter: AtomicU64,
}

impl ZeroSharer {
    /// Derive the three pairwise seeds from one master seed and hand each
    /// server its view.
    pub fn setup(master_seed: u64) -> [ZeroSharer; 3] {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed ^ 0x5eed_2e70_5ba2_e000);
        let mut seeds = [[0u8; 32]; 3];
        for s in seeds.iter_mut() {
            rng.fill_bytes(s);
        }
        [0, 1, 2].map(|j| ZeroSharer::from_seeds(j, &seeds))
    }

    pub fn from_seeds(index: usize, seeds: &[[u8; 32]; 3]) -> Self {
        ZeroSharer {
            index,
            own: seeds[index],
            prev: seeds[prev_server(index)],
            counter: AtomicU64::new(0),
        }
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.index
    }

    /// Claim a block of `n` counters. Servers in lockstep claim identical blocks.
    pub fn reserve(&self, n: u64) -> u64 {
        self.counter.fetch_add(n, Ordering::SeqCst)
    }

    pub fn counter(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    fn prf(seed: &[u8; 32], stream: u64, ctr: u64, n: usize) -> Vec<u64> {
        let mut rng = ChaCha20Rng::from_seed(*seed);
        rng.set_stream(stream);
        rng.set_word_pos(ctr as u128 * 2);
        (0..n).map(|_| rng.next_u64()).collect()
    }

    /// Arithmetic zero-shares for counters `ctr..ctr+n`.
    pub fn alpha(&self, ctr: u64, n: usize) -> Vec<RingElement> {
        let a = Self::prf(&self.own, STREAM_ZERO_ARITH, ctr, n);
        let b = Self::prf(&self.prev, STREAM_ZERO_ARITH, ctr, n);
        a.into_iter()
            .zip(b)
            .map(|(x, y)| RingElement(x.wrapping_sub(y)))
            .collect()
    }

    /// XOR zero-shares for counters `ctr..ctr+n`.
    pub fn alpha_xor(&self, ctr: u64, n: usize) -> Vec<u64> {
        let a = Self::prf(&self.own, STREAM_ZERO_XOR, ctr, n);
        let b = Self::prf(&self.prev, STREAM_ZERO_XOR, ctr, n);
        a.into_iter().zip(b).map(|(x, y)| x ^ y).collect()
    }

    /// Randomness known to this server and the next one.
    pub fn shared_with_next(&self, ctr: u64, n: usize) -> Vec<RingElement> {
        Self::prf(&self.own, STREAM_PAIR, ctr, n)
            .into_iter()
            .map(RingElement)
            .collect()
    }

    /// Randomness known to this server and the previous one.
    pub fn shared_with_prev(&self, ctr: u64, n: usize) -> Vec<RingElement> {
        Self::prf(&self.prev, STREAM_PAIR, ctr, n)
            .into_iter()
            .map(RingElement)
            .collect()
    }
}

/// Header of a share frame payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShareFrameHeader {
    pub tensor_id: u32,
    pub rows: u32,
    pub cols: u32,
    pub word_kind: u8,
}

impl ShareFrameHeader {
    pub const LEN: usize = 13;
    /// Set on `word_kind` when the payload carries one word per element
    /// (resharing messages) instead of a replicated pair.
    pub const SINGLE: u8 = 0x80;

    pub fn kind(&self) -> Result<WordKind> {
        WordKind::from_u8(self.word_kind & !Self::SINGLE)
    }

    pub fn is_single(&self) -> bool {
        self.word_kind & Self::SINGLE != 0
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.tensor_id.to_le_bytes());
        out.extend_from_slice(&self.rows.to_le_bytes());
        out.extend_from_slice(&self.cols.to_le_bytes());
        out.push(self.word_kind);
    }

    fn read(buf: &[u8]) -> Result<Self> {
        if buf.len() < Self::LEN {
            return Err(Error::FrameDecode(format!("share header needs 13 bytes, got {}", buf.len())));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        Ok(ShareFrameHeader {
            tensor_id: u32_at(0),
            rows: u32_at(4),
            cols: u32_at(8),
            word_kind: buf[12],
        })
    }
}

fn dims_u32(rows: usize, cols: usize) -> Result<(u32, u32)> {
    let r = u32::try_from(rows).map_err(|_| Error::Shape(format!("{rows} rows exceed u32")))?;
    let c = u32::try_from(cols).map_err(|_| Error::Shape(format!("{cols} cols exceed u32")))?;
    Ok((r, c))
}

/// Little-endian share frame: header, then `rows*cols` pairs of u64.
pub fn encode_share_payload(tensor_id: u32, t: &ShareTensor) -> Result<Vec<u8>> {
    let (rows, cols) = dims_u32(t.rows, t.cols)?;
    let mut out = Vec::with_capacity(ShareFrameHeader::LEN + 16 * t.len());
    ShareFrameHeader {
        tensor_id,
        rows,
        cols,
        word_kind: t.kind as u8,
    }
    .write(&mut out);
    for s in &t.data {
        out.extend_from_slice(&s.0 .0.to_le_bytes());
        out.extend_from_slice(&s.1 .0.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_share_payload(buf: &[u8]) -> Result<(u32, ShareTensor)> {
    let h = ShareFrameHeader::read(buf)?;
    if h.is_single() {
        return Err(Error::FrameDecode("expected pair payload, got single words".into()));
    }
    let n = h.rows as usize * h.cols as usize;
    let body = &buf[ShareFrameHeader::LEN..];
    if body.len() != 16 * n {
        return Err(Error::FrameDecode(format!(
            "share body {} bytes, expected {}",
            body.len(),
            16 * n
        )));
    }
    let data = body
        .chunks_exact(16)
        .map(|c| {
            ReplicatedShare(
                RingElement(u64::from_le_bytes(c[..8].try_into().unwrap())),
                RingElement(u64::from_le_bytes(c[8..].try_into().unwrap())),
            )
        })
        .collect();
    let t = ShareTensor::new(h.rows as usize, h.cols as usize, h.kind()?, data)?;
    Ok((h.tensor_id, t))
}

/// Single-word variant used for resharing: header, then `rows*cols` u64.
pub fn encode_word_payload(tensor_id: u32, rows: usize, cols: usize, kind: WordKind, words: &[RingElement]) -> Result<Vec<u8>> {
    if words.len() != rows * cols {
        return Err(Error::Shape(format!("{} words for {rows}x{cols}", words.len())));
    }
    let (r, c) = dims_u32(rows, cols)?;
    let mut out = Vec::with_capacity(ShareFrameHeader::LEN + 8 * words.len());
    ShareFrameHeader {
        tensor_id,
        rows: r,
        cols: c,
        word_kind: kind as u8 | ShareFrameHeader::SINGLE,
    }
    .write(&mut out);
    for w in words {
        out.extend_from_slice(&w.0.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_word_payload(buf: &[u8]) -> Result<(ShareFrameHeader, Vec<RingElement>)> {
    let h = ShareFrameHeader::read(buf)?;
    if !h.is_single() {
        return Err(Error::FrameDecode("expected single-word payload".into()));
    }
    let n = h.rows as usize * h.cols as usize;
    let body = &buf[ShareFrameHeader::LEN..];
    if body.len() != 8 * n {
        return Err(Error::FrameDecode(format!(
            "word body {} bytes, expected {}",
            body.len(),
            8 * n
        )));
    }
    let words = body
        .chunks_exact(8)
        .map(|c| RingElement(u64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok((h, words))
}

/// Share a vector of reals through `codec` with a seeded generator.
pub fn share_reals<R: RngCore + ?Sized>(
    codec: &crate::ring::FixedCodec,
    xs: &[f64],
    rng: &mut R,
) -> Result<[ShareTensor; 3]> {
    let words = codec.encode_slice(xs)?;
    share_tensor(&words, xs.len(), 1, WordKind::Fixed, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::FixedCodec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn views_all(s: &[ReplicatedShare; 3]) -> Vec<(usize, ReplicatedShare)> {
        s.iter().copied().enumerate().collect()
    }

    #[test]
    fn share_reveal_examples() {
        let c = FixedCodec::default();
        let mut r = rng(1);
        for x in [0.0, 3.5, -0.25] {
            let s = share(c.encode(x).unwrap(), &mut r);
            assert_eq!(c.decode(reveal(&views_all(&s)).unwrap()), x);
        }
    }

    #[test]
    fn replication_layout() {
        let s = share(RingElement(42), &mut rng(2));
        for j in 0..3 {
            assert_eq!(s[j].1, s[next_server(j)].0);
        }
    }

    #[test]
    fn any_two_servers_suffice() {
        let s = share(RingElement(0xdead_beef), &mut rng(3));
        let a = reveal(&[(0, s[0]), (1, s[1])]).unwrap();
        let b = reveal(&[(1, s[1]), (2, s[2])]).unwrap();
        let c = reveal(&[(2, s[2]), (0, s[0])]).unwrap();
        assert_eq!(a, RingElement(0xdead_beef));
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn single_server_cannot_reveal() {
        let s = share(RingElement(7), &mut rng(4));
        assert!(reveal(&[(0, s[0])]).is_err());
        assert!(reveal(&[(0, s[0]), (0, s[0])]).is_err());
    }

    #[test]
    fn tampering_is_detected() {
        let mut s = share(RingElement(9), &mut rng(5));
        s[1].0 += RingElement(1);
        assert!(matches!(
            reveal(&views_all(&s)),
            Err(Error::Inconsistency { .. })
        ));
        assert!(matches!(
            reveal(&[(0, s[0]), (1, s[1])]),
            Err(Error::Inconsistency { .. })
        ));
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let a = share(RingElement(5), &mut rng(77));
        let b = share(RingElement(5), &mut rng(77));
        assert_eq!(a, b);
    }

    #[test]
    fn public_constant_reveals() {
        let c = RingElement(123);
        let v: Vec<_> = (0..3).map(|j| (j, ReplicatedShare::public(c, j))).collect();
        assert_eq!(reveal(&v).unwrap(), c);
    }

    #[test]
    fn zero_shares_telescope() {
        let z = ZeroSharer::setup(11);
        for ctr in 0..1000u64 {
            let s: RingElement = z.iter().map(|s| s.alpha(ctr, 1)[0]).sum();
            assert_eq!(s, RingElement::ZERO);
            let x = z.iter().fold(0, |acc, s| acc ^ s.alpha_xor(ctr, 1)[0]);
            assert_eq!(x, 0);
        }
        // block evaluation agrees with one-at-a-time evaluation
        let block = z[1].alpha(500, 4);
        for (i, w) in block.iter().enumerate() {
            assert_eq!(*w, z[1].alpha(500 + i as u64, 1)[0]);
        }
    }

    #[test]
    fn zero_shares_distinct_across_counters() {
        let z = ZeroSharer::setup(12);
        let mut seen = std::collections::HashSet::new();
        for ctr in 0..2000u64 {
            let triple: Vec<u64> = z.iter().map(|s| s.alpha(ctr, 1)[0].0).collect();
            assert!(seen.insert(triple));
        }
    }

    #[test]
    fn pair_randomness_is_shared_with_the_right_neighbour() {
        let z = ZeroSharer::setup(13);
        for j in 0..3 {
            assert_eq!(
                z[j].shared_with_next(9, 3),
                z[next_server(j)].shared_with_prev(9, 3)
            );
        }
    }

    #[test]
    fn alphas_do_not_pin_down_a_single_prf_output() {
        // α_0 = PRF(s_0) - PRF(s_2); PRF(s_0) masks it, so the low bits of
        // α_0 (and of α_0 + α_1) are independent of PRF(s_2).
        let z = ZeroSharer::setup(14);
        let n = 40_000u64;
        let mut table = [[0f64; 4]; 4];
        for ctr in 0..n {
            let a0 = z[0].alpha(ctr, 1)[0].0;
            let a1 = z[1].alpha(ctr, 1)[0].0;
            let hidden = ZeroSharer::prf(&z[2].own, STREAM_ZERO_ARITH, ctr, 1)[0];
            let obs = (a0.wrapping_add(a1) ^ a0) & 3;
            table[obs as usize][(hidden & 3) as usize] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..4).map(|c| table.iter().map(|r| r[c]).sum()).collect();
        let mut chi = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let e = rows[r] * cols[c] / n as f64;
                chi += (table[r][c] - e).powi(2) / e;
            }
        }
        // 9 dof, p = 0.001 critical value 27.88
        assert!(chi < 27.88, "chi2 = {chi}");
    }

    #[test]
    fn share_frame_layout() {
        let views = share_tensor(
            &[RingElement(1), RingElement(2)],
            1,
            2,
            WordKind::Integer,
            &mut rng(6),
        )
        .unwrap();
        let buf = encode_share_payload(7, &views[0]).unwrap();
        assert_eq!(buf.len(), 13 + 2 * 16);
        assert_eq!(&buf[0..4], &7u32.to_le_bytes());
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(buf[12], 1);
        assert_eq!(&buf[13..21], &views[0].data()[0].0 .0.to_le_bytes());
        let (id, back) = decode_share_payload(&buf).unwrap();
        assert_eq!(id, 7);
        assert_eq!(back, views[0]);
        assert!(decode_share_payload(&buf[..20]).is_err());
    }

    proptest! {
        #[test]
        fn reveal_inverts_share(x: u64, seed: u64) {
            let s = share(RingElement(x), &mut rng(seed));
            prop_assert_eq!(reveal(&views_all(&s)).unwrap(), RingElement(x));
            let b = share_xor(x, &mut rng(seed));
            prop_assert_eq!(reveal_xor(&views_all(&b)).unwrap(), RingElement(x));
        }

        #[test]
        fn word_payload_roundtrip(words in proptest::collection::vec(any::<u64>(), 0..64)) {
            let w: Vec<_> = words.iter().copied().map(RingElement).collect();
            let buf = encode_word_payload(3, w.len(), 1, WordKind::Fixed, &w).unwrap();
            let (h, back) = decode_word_payload(&buf).unwrap();
            prop_assert!(h.is_single());
            prop_assert_eq!(back, w);
        }
    }
}
