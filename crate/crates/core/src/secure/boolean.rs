//! Boolean circuits on XOR-shared words: sign extraction and equality.

use super::arith::{sec_add, sec_scale_public, sec_sub, sec_sub_public};
use super::SecureContext;
use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::sharing::{next_server, ReplicatedShare, ShareTensor, WordKind};

fn map(x: &ShareTensor, kind: WordKind, f: impl Fn(ReplicatedShare) -> ReplicatedShare) -> ShareTensor {
    let data = x.data().iter().map(|&s| f(s)).collect();
    ShareTensor::new(x.rows(), x.cols(), kind, data).expect("same shape")
}

fn xor(a: &ShareTensor, b: &ShareTensor) -> ShareTensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| ReplicatedShare(RingElement(x.0 .0 ^ y.0 .0), RingElement(x.1 .0 ^ y.1 .0)))
        .collect();
    ShareTensor::new(a.rows(), a.cols(), WordKind::Boolean, data).expect("same shape")
}

fn shl(a: &ShareTensor, k: u32) -> ShareTensor {
    map(a, WordKind::Boolean, |s| ReplicatedShare(RingElement(s.0 .0 << k), RingElement(s.1 .0 << k)))
}

fn shr(a: &ShareTensor, k: u32) -> ShareTensor {
    map(a, WordKind::Boolean, |s| ReplicatedShare(RingElement(s.0 .0 >> k), RingElement(s.1 .0 >> k)))
}

/// Split one sharing into three sharings, one per additive component, each
/// known in the clear to the two servers that hold it. Local.
fn components(x: &ShareTensor, server: usize, kind: WordKind) -> [ShareTensor; 3] {
    std::array::from_fn(|c| {
        map(x, kind, |s| {
            let first = if c == server { s.0 } else { RingElement::ZERO };
            let second = if c == next_server(server) { s.1 } else { RingElement::ZERO };
            ReplicatedShare(first, second)
        })
    })
}

impl SecureContext {
    /// Several bitwise ANDs batched into one resharing round.
    fn and_many(&mut self, pairs: &[(&ShareTensor, &ShareTensor)]) -> Result<Vec<ShareTensor>> {
        let total: usize = pairs.iter().map(|(a, _)| a.len()).sum();
        let mut z = Vec::with_capacity(total);
        for (a, b) in pairs {
            a.ensure_same_shape(b)?;
            z.extend(a.data().iter().zip(b.data()).map(|(x, y)| {
                let (x0, x1, y0, y1) = (x.0 .0, x.1 .0, y.0 .0, y.1 .0);
                (x0 & y0) ^ (x0 & y1) ^ (x1 & y0)
            }));
        }
        let ctr = self.zero.reserve(total as u64);
        for (w, b) in z.iter_mut().zip(self.zero.alpha_xor(ctr, total)) {
            *w ^= b;
        }
        let words: Vec<RingElement> = z.into_iter().map(RingElement).collect();
        let next = self.exchange(WordKind::Boolean, words.clone())?;
        let mut out = Vec::with_capacity(pairs.len());
        let mut off = 0;
        for (a, _) in pairs {
            let n = a.len();
            let data = (off..off + n)
                .map(|i| ReplicatedShare(words[i], next[i]))
                .collect();
            out.push(ShareTensor::new(a.rows(), a.cols(), WordKind::Boolean, data)?);
            off += n;
        }
        Ok(out)
    }

    /// Arithmetic-to-boolean conversion, eight rounds.
    ///
    /// The three additive components are added as boolean words: a full-adder
    /// layer (one AND round) reduces three summands to two, then a
    /// Kogge-Stone prefix adder (one generate round plus six prefix rounds)
    /// produces the carries.
    pub fn a2b(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        if x.kind() == WordKind::Boolean {
            return Err(Error::Param("a2b on a boolean sharing".into()));
        }
        let [a, b, c] = components(x, self.index, WordKind::Boolean);
        let ac = xor(&a, &c);
        let bc = xor(&b, &c);
        let maj = self.and_many(&[(&ac, &bc)])?.remove(0);
        let carry = shl(&xor(&maj, &c), 1);
        let s = xor(&xor(&a, &b), &c);

        let p0 = xor(&s, &carry);
        let mut g = self.and_many(&[(&s, &carry)])?.remove(0);
        let mut p = p0.clone();
        for k in [1u32, 2, 4, 8, 16, 32] {
            let gs = shl(&g, k);
            if k < 32 {
                let ps = shl(&p, k);
                let mut r = self.and_many(&[(&p, &gs), (&p, &ps)])?;
                p = r.pop().unwrap();
                g = xor(&g, &r.pop().unwrap());
            } else {
                let r = self.and_many(&[(&p, &gs)])?.remove(0);
                g = xor(&g, &r);
            }
        }
        Ok(xor(&p0, &shl(&g, 1)))
    }

    /// Convert a boolean sharing of bits (low bit of each word) into an
    /// integer-kind arithmetic sharing of 0/1, two rounds.
    pub fn b2a_bit(&mut self, bits: &ShareTensor) -> Result<ShareTensor> {
        let low = map(bits, WordKind::Integer, |s| {
            ReplicatedShare(RingElement(s.0 .0 & 1), RingElement(s.1 .0 & 1))
        });
        let [b0, b1, b2] = components(&low, self.index, WordKind::Integer);
        let two = RingElement(2);
        let m = self.sec_mul_raw(&b0, &b1)?;
        let t = sec_sub(&sec_add(&b0, &b1)?, &sec_scale_public(&m, two))?;
        let m = self.sec_mul_raw(&t, &b2)?;
        sec_sub(&sec_add(&t, &b2)?, &sec_scale_public(&m, two))
    }

    /// Sign bit of each element as an integer 0/1 sharing, ten rounds.
    pub fn sec_msb(&mut self, x: &ShareTensor) -> Result<ShareTensor> {
        let sum = self.a2b(x)?;
        self.b2a_bit(&shr(&sum, 63))
    }

    /// `[x < y]` as integer 0/1, valid while `|x - y| < 2^63`.
    pub fn sec_lt(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        let d = sec_sub(x, y)?;
        self.sec_msb(&d)
    }

    /// `[x == c]` for a public word `c`, as integer 0/1, sixteen rounds.
    pub fn sec_eq_const(&mut self, x: &ShareTensor, c: RingElement) -> Result<ShareTensor> {
        let d = sec_sub_public(x, c, self.index);
        let bits = self.a2b(&d)?;
        // NOT: flip component 0, held by servers 0 (first) and 2 (second).
        let ones = ReplicatedShare::public(RingElement(u64::MAX), self.index);
        let mut w = map(&bits, WordKind::Boolean, |s| {
            ReplicatedShare(RingElement(s.0 .0 ^ ones.0 .0), RingElement(s.1 .0 ^ ones.1 .0))
        });
        for k in [32u32, 16, 8, 4, 2, 1] {
            let ws = shr(&w, k);
            w = self.and_many(&[(&w, &ws)])?.remove(0);
        }
        self.b2a_bit(&w)
    }
}
