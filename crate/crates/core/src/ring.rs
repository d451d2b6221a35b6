//! Words of the ring Z/2^64 and the fixed-point embedding of reals into it.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A residue modulo 2^64. All arithmetic wraps.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(transparent)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);
    pub const ONE: RingElement = RingElement(1);

    #[inline]
    pub fn word(self) -> u64 {
        self.0
    }

    /// Two's-complement reading of the word.
    #[inline]
    pub fn signed(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn from_signed(v: i64) -> Self {
        RingElement(v as u64)
    }

    #[inline]
    pub fn msb(self) -> bool {
        self.0 >> 63 == 1
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({:#018x})", self.0)
    }
}

impl From<u64> for RingElement {
    fn from(w: u64) -> Self {
        RingElement(w)
    }
}

#[inline]
pub fn ring_add(a: RingElement, b: RingElement) -> RingElement {
    RingElement(a.0.wrapping_add(b.0))
}

#[inline]
pub fn ring_sub(a: RingElement, b: RingElement) -> RingElement {
    RingElement(a.0.wrapping_sub(b.0))
}

#[inline]
pub fn ring_mul(a: RingElement, b: RingElement) -> RingElement {
    RingElement(a.0.wrapping_mul(b.0))
}

impl Add for RingElement {
    type Output = RingElement;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        ring_add(self, rhs)
    }
}

impl Sub for RingElement {
    type Output = RingElement;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        ring_sub(self, rhs)
    }
}

impl Mul for RingElement {
    type Output = RingElement;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        ring_mul(self, rhs)
    }
}

impl Neg for RingElement {
    type Output = RingElement;
    #[inline]
    fn neg(self) -> Self {
        RingElement(self.0.wrapping_neg())
    }
}

impl AddAssign for RingElement {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.0 = self.0.wrapping_add(rhs.0);
    }
}

impl SubAssign for RingElement {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.0 = self.0.wrapping_sub(rhs.0);
    }
}

impl std::iter::Sum for RingElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(RingElement::ZERO, |a, b| a + b)
    }
}

/// Fixed-point codec: `x` is stored as `round(x * 2^frac_bits)` in two's complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedCodec {
    frac_bits: u32,
}

impl Default for FixedCodec {
    fn default() -> Self {
        FixedCodec { frac_bits: Self::DEFAULT_FRAC_BITS }
    }
}

impl FixedCodec {
    pub const DEFAULT_FRAC_BITS: u32 = 20;
    pub const TOTAL_BITS: u32 = 64;

    pub fn new(frac_bits: u32) -> Result<Self> {
        if frac_bits == 0 || frac_bits >= 62 {
            return Err(Error::Param(format!("frac_bits must be in 1..62, got {frac_bits}")));
        }
        Ok(FixedCodec { frac_bits })
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// One unit in the last place, 2^-f.
    #[inline]
    pub fn ulp(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Exclusive magnitude bound of encodable reals, 2^(63-f).
    pub fn limit(&self) -> f64 {
        (1u64 << (63 - self.frac_bits)) as f64
    }

    /// Rounds half away from zero.
    pub fn encode(&self, x: f64) -> Result<RingElement> {
        let limit = self.limit();
        if !x.is_finite() || x.abs() >= limit {
            return Err(Error::Range { value: x, limit });
        }
        let scaled = (x * self.scale()).round();
        Ok(RingElement::from_signed(scaled as i64))
    }

    pub fn decode(&self, w: RingElement) -> f64 {
        w.signed() as f64 / self.scale()
    }

    pub fn encode_slice(&self, xs: &[f64]) -> Result<Vec<RingElement>> {
        xs.iter().map(|&x| self.encode(x)).collect()
    }

    pub fn decode_slice(&self, ws: &[RingElement]) -> Vec<f64> {
        ws.iter().map(|&w| self.decode(w)).collect()
    }

    /// Snap `x` onto the codec grid, i.e. `decode(encode(x))`.
    pub fn quantize(&self, x: f64) -> Result<f64> {
        Ok(self.decode(self.encode(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        let c = FixedCodec::default();
        assert_eq!(c.encode(0.0).unwrap().word(), 0);
        assert_eq!(c.encode(1.0).unwrap().word(), 1_048_576);
        assert_eq!(c.encode(-1.0).unwrap().word(), 0u64.wrapping_sub(1_048_576));
    }

    #[test]
    fn encode_rejects_out_of_band() {
        let c = FixedCodec::default();
        assert!(matches!(c.encode(2f64.powi(43)), Err(Error::Range { .. })));
        assert!(matches!(c.encode(-2f64.powi(43)), Err(Error::Range { .. })));
        assert!(c.encode(f64::NAN).is_err());
        assert!(c.encode(2f64.powi(43) - 1.0).is_ok());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let c = FixedCodec::default();
        let half = 0.5 * c.ulp();
        assert_eq!(c.encode(half).unwrap().signed(), 1);
        assert_eq!(c.encode(-half).unwrap().signed(), -1);
    }

    #[test]
    fn decode_examples() {
        let c = FixedCodec::default();
        assert_eq!(c.decode(c.encode(3.5).unwrap()), 3.5);
        assert_eq!(c.decode(RingElement(0)), 0.0);
        assert_eq!(c.decode(RingElement(1 << 63)), -(2f64.powi(43)));
    }

    #[test]
    fn ring_op_examples() {
        let c = FixedCodec::default();
        assert_eq!(ring_add(RingElement(u64::MAX), RingElement(1)), RingElement(0));
        assert_eq!(
            ring_sub(RingElement(0), c.encode(1.0).unwrap()),
            c.encode(-1.0).unwrap()
        );
        // product carries scale 2^(2f) before truncation
        let p = ring_mul(c.encode(2.0).unwrap(), c.encode(3.0).unwrap());
        assert_eq!(p.word(), (1u64 << 21) * 3 * (1u64 << 20));
        assert_eq!(p.word() >> 20, c.encode(6.0).unwrap().word());
    }

    proptest! {
        #[test]
        fn ring_laws(a: u64, b: u64, d: u64) {
            let (a, b, d) = (RingElement(a), RingElement(b), RingElement(d));
            prop_assert_eq!((a + b) + d, a + (b + d));
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a * (b + d), a * b + a * d);
            prop_assert_eq!(a - a, RingElement::ZERO);
        }

        #[test]
        fn roundtrip_on_dyadic_grid(k in -(1i64 << 53)..(1i64 << 53)) {
            let c = FixedCodec::default();
            let x = k as f64 / c.scale();
            prop_assert_eq!(c.decode(c.encode(x).unwrap()), x);
        }
    }
}
