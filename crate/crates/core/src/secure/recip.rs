use super::arith::{sec_scale_public, sec_sub};
use super::SecureContext;
use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::sharing::{ShareTensor, WordKind};

pub const DEFAULT_RECIP_ITERS: usize = 15;

impl SecureContext {
    /// `1 / y` by Newton iteration `x ← 2x - y x²`, starting from
    /// `2 / (lo + hi)`. Every element of `y` must lie in `[lo, hi]` with
    /// `0 < lo`; the relative error then squares each step from
    /// `(hi - lo) / (hi + lo)` down to the fixed-point noise floor.
    pub fn sec_recip(&mut self, y: &ShareTensor, lo: f64, hi: f64, iters: usize) -> Result<ShareTensor> {
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::Range {
                value: lo,
                limit: 0.0,
            });
        }
        if y.kind() != WordKind::Fixed {
            return Err(Error::Param("reciprocal of a non fixed-point sharing".into()));
        }
        let x0 = self.codec.encode(2.0 / (lo + hi))?;
        let mut x = ShareTensor::public(&vec![x0; y.len()], y.rows(), y.cols(), WordKind::Fixed, self.index)?;
        for _ in 0..iters {
            let yx = self.sec_mul(y, &x)?;
            let yxx = self.sec_mul(&yx, &x)?;
            x = sec_sub(&sec_scale_public(&x, RingElement(2)), &yxx)?;
        }
        Ok(x)
    }

    /// `x / y` as `x · recip(y)`; `y` must lie in `[lo, hi]`, `lo > 0`.
    pub fn sec_div(&mut self, x: &ShareTensor, y: &ShareTensor, lo: f64, hi: f64, iters: usize) -> Result<ShareTensor> {
        x.ensure_same_shape(y)?;
        let r = self.sec_recip(y, lo, hi, iters)?;
        self.sec_mul(x, &r)
    }
}
