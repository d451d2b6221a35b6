use super::SecureContext;
use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::sharing::{ReplicatedShare, ShareTensor, WordKind};

/// `[x] + [y]`, local.
pub fn sec_add(x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
    x.ensure_same_shape(y)?;
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| ReplicatedShare(a.0 + b.0, a.1 + b.1))
        .collect();
    ShareTensor::new(x.rows(), x.cols(), x.kind(), data)
}

/// `[-x]`, local.
pub fn sec_neg(x: &ShareTensor) -> ShareTensor {
    let data = x
        .data()
        .iter()
        .map(|a| ReplicatedShare(-a.0, -a.1))
        .collect();
    ShareTensor::new(x.rows(), x.cols(), x.kind(), data).expect("same shape")
}

/// `[x] + [-y]`, local.
pub fn sec_sub(x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
    sec_add(x, &sec_neg(y))
}

/// `[x] + c` for a public word `c`, applied by the holders of component 0.
pub fn sec_add_public(x: &ShareTensor, c: RingElement, server: usize) -> ShareTensor {
    let p = ReplicatedShare::public(c, server);
    let data = x
        .data()
        .iter()
        .map(|a| ReplicatedShare(a.0 + p.0, a.1 + p.1))
        .collect();
    ShareTensor::new(x.rows(), x.cols(), x.kind(), data).expect("same shape")
}

pub fn sec_sub_public(x: &ShareTensor, c: RingElement, server: usize) -> ShareTensor {
    sec_add_public(x, -c, server)
}

/// `c * [x]` for a public ring word, local. No rescaling.
pub fn sec_scale_public(x: &ShareTensor, c: RingElement) -> ShareTensor {
    let data = x
        .data()
        .iter()
        .map(|a| ReplicatedShare(a.0 * c, a.1 * c))
        .collect();
    ShareTensor::new(x.rows(), x.cols(), x.kind(), data).expect("same shape")
}

#[inline]
fn cross(x: ReplicatedShare, y: ReplicatedShare) -> RingElement {
    x.0 * y.0 + x.0 * y.1 + x.1 * y.0
}

fn product_kind(a: WordKind, b: WordKind) -> WordKind {
    if a == WordKind::Fixed || b == WordKind::Fixed {
        WordKind::Fixed
    } else {
        WordKind::Integer
    }
}

impl SecureContext {
    fn finish_reshare(&mut self, rows: usize, cols: usize, kind: WordKind, mut z: Vec<RingElement>) -> Result<ShareTensor> {
        let n = z.len();
        let ctr = self.zero.reserve(n as u64);
        for (w, a) in z.iter_mut().zip(self.zero.alpha(ctr, n)) {
            *w += a;
        }
        let next = self.exchange(kind, z.clone())?;
        let data = z
            .into_iter()
            .zip(next)
            .map(|(a, b)| ReplicatedShare(a, b))
            .collect();
        ShareTensor::new(rows, cols, kind, data)
    }

    /// Element-wise product without rescaling: one resharing round.
    ///
    /// Server `j` forms `z_j = x_j y_j + x_j y_{j+1} + x_{j+1} y_j + α_j` and
    /// sends it to server `j-1`.
    pub fn sec_mul_raw(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        x.ensure_same_shape(y)?;
        let z = x.data().iter().zip(y.data()).map(|(&a, &b)| cross(a, b)).collect();
        self.finish_reshare(x.rows(), x.cols(), product_kind(x.kind(), y.kind()), z)
    }

    /// Fixed-point product: [`Self::sec_mul_raw`] followed by [`Self::truncate`]
    /// when both operands carry the 2^f scale.
    pub fn sec_mul(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        let z = self.sec_mul_raw(x, y)?;
        if x.kind() == WordKind::Fixed && y.kind() == WordKind::Fixed {
            self.truncate(&z, self.codec.frac_bits())
        } else {
            Ok(z)
        }
    }

    /// Matrix product `x (r×n) · y (n×c)` without rescaling, one round.
    pub fn sec_matmul_raw(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        if x.cols() != y.rows() {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", x.shape(), y.shape())));
        }
        let (r, n, c) = (x.rows(), x.cols(), y.cols());
        let mut z = vec![RingElement::ZERO; r * c];
        for i in 0..r {
            for k in 0..n {
                let a = x.get(i, k);
                let row = &y.data()[k * c..(k + 1) * c];
                for (out, &b) in z[i * c..(i + 1) * c].iter_mut().zip(row) {
                    *out += cross(a, b);
                }
            }
        }
        self.finish_reshare(r, c, product_kind(x.kind(), y.kind()), z)
    }

    pub fn sec_matmul(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        let z = self.sec_matmul_raw(x, y)?;
        if x.kind() == WordKind::Fixed && y.kind() == WordKind::Fixed {
            self.truncate(&z, self.codec.frac_bits())
        } else {
            Ok(z)
        }
    }

    /// `xᵀ · y` for `x` (m×c) and `y` (m×k), without rescaling, one round.
    /// This is the column-aggregation shape: summing `y` rows selected by
    /// 0/1 columns of `x`.
    pub fn sec_xt_y_raw(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        if x.rows() != y.rows() {
            return Err(Error::Shape(format!("xᵀy {:?} vs {:?}", x.shape(), y.shape())));
        }
        let (m, c, k) = (x.rows(), x.cols(), y.cols());
        let mut z = vec![RingElement::ZERO; c * k];
        let xd = x.data();
        let yd = y.data();
        for i in 0..m {
            let yrow = &yd[i * k..(i + 1) * k];
            let xrow = &xd[i * c..(i + 1) * c];
            for (col, &a) in xrow.iter().enumerate() {
                let out = &mut z[col * k..(col + 1) * k];
                for (o, &b) in out.iter_mut().zip(yrow) {
                    *o += cross(a, b);
                }
            }
        }
        self.finish_reshare(c, k, product_kind(x.kind(), y.kind()), z)
    }

    /// Probabilistic truncation by `bits`, one round.
    ///
    /// The replicated sharing is viewed as a two-party sharing
    /// `x = A + B` with `A = x_1 + x_2` (server 1) and `B = x_0` (servers 0 and
    /// 2). `A` is floored and `B` ceiled, which rounds `x / 2^bits`
    /// stochastically to a neighbouring integer. Server 1 then re-randomises
    /// with pairwise randomness `r_1` (servers 0,1) and `r_2` (servers 1,2)
    /// and sends `c = A' - r_1 - r_2` to servers 0 and 2, giving the
    /// replicated sharing `(B' + c, r_1, r_2)`. Fails (wraps) with probability
    /// about `|x| / 2^63` per element.
    pub fn truncate(&mut self, x: &ShareTensor, bits: u32) -> Result<ShareTensor> {
        if bits >= 64 {
            return Err(Error::Param(format!("truncate by {bits} bits")));
        }
        let n = x.len();
        let ctr = self.zero.reserve(n as u64);
        let floor = |w: RingElement| RingElement::from_signed(w.signed() >> bits);
        let ceil = |w: RingElement| -RingElement::from_signed((-w).signed() >> bits);
        let session = self.session;
        let round = self.round;
        let servers = self.servers;
        let data: Vec<ReplicatedShare> = match self.index {
            1 => {
                let r1 = self.zero.shared_with_prev(ctr, n);
                let r2 = self.zero.shared_with_next(ctr, n);
                let c: Vec<RingElement> = x
                    .data()
                    .iter()
                    .zip(r1.iter().zip(&r2))
                    .map(|(s, (&a, &b))| floor(s.0 + s.1) - a - b)
                    .collect();
                let frame = self.reshare_frame(x.kind(), &c)?;
                self.net.send(servers[0], frame.clone())?;
                self.net.send(servers[2], frame)?;
                r1.into_iter().zip(r2).map(|(a, b)| ReplicatedShare(a, b)).collect()
            }
            0 => {
                let r1 = self.zero.shared_with_next(ctr, n);
                let c = self.read_words(servers[1], n)?;
                x.data()
                    .iter()
                    .zip(c)
                    .zip(r1)
                    .map(|((s, c), r)| ReplicatedShare(ceil(s.0) + c, r))
                    .collect()
            }
            _ => {
                let r2 = self.zero.shared_with_prev(ctr, n);
                let c = self.read_words(servers[1], n)?;
                x.data()
                    .iter()
                    .zip(c)
                    .zip(r2)
                    .map(|((s, c), r)| ReplicatedShare(r, ceil(s.1) + c))
                    .collect()
            }
        };
        debug_assert_eq!((self.session, self.round), (session, round));
        self.round += 1;
        ShareTensor::new(x.rows(), x.cols(), x.kind(), data)
    }
}
