//! Plaintext building blocks shared by every party: gradients, per-node
//! quantile binning, histogram aggregation, split scan and leaf weights.

use serde::{Deserialize, Serialize};

use super::params::{BoostParams, Loss};
use crate::data::FeatureFrame;
use crate::error::{Error, Result};
use crate::ring::FixedCodec;

/// First- and second-order gradients, one entry per training row.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl GradPair {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Round every entry to the fixed-point grid, so that sums computed in
    /// the ring and in `f64` agree bit for bit.
    pub fn quantized(&self, codec: &FixedCodec) -> Result<GradPair> {
        let q = |v: &[f64]| v.iter().map(|&x| codec.quantize(x)).collect::<Result<Vec<_>>>();
        Ok(GradPair {
            g: q(&self.g)?,
            h: q(&self.h)?,
        })
    }

    pub fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]))
    }
}

pub fn gradients(y: &[f64], yhat: &[f64], loss: Loss) -> Result<GradPair> {
    if y.len() != yhat.len() {
        return Err(Error::Length(format!("{} labels vs {} predictions", y.len(), yhat.len())));
    }
    let (g, h) = match loss {
        Loss::Squared => (yhat.iter().zip(y).map(|(p, t)| p - t).collect(), vec![1.0; y.len()]),
        Loss::Logistic => y
            .iter()
            .zip(yhat)
            .map(|(&t, &p)| {
                let s = 1.0 / (1.0 + (-p).exp());
                (-t + s, s * (1.0 - s))
            })
            .unzip(),
    };
    Ok(GradPair { g, h })
}

/// Quantile-binned image of one party's features on one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinFrame {
    pub rows: usize,
    pub cols: usize,
    /// Row-major bin indices; -1 for rows outside the node's sample space.
    pub xbin: Vec<i32>,
    /// Strictly increasing boundaries per feature, at most `B - 1` each.
    pub boundaries: Vec<Vec<f64>>,
}

impl BinFrame {
    #[inline]
    pub fn bin(&self, i: usize, j: usize) -> i32 {
        self.xbin[i * self.cols + j]
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Boundaries at the `b/B` quantiles of the values on `rows`, duplicates
/// collapsed.
pub fn quantile_boundaries(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    boundaries_from_sorted(&v, bins)
}

fn boundaries_from_sorted(v: &[f64], bins: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(bins - 1);
    for b in 1..bins {
        let q = quantile(v, b as f64 / bins as f64);
        if out.last().is_none_or(|&last| q > last) {
            out.push(q);
        }
    }
    out
}

/// Number of boundaries strictly below `v`: values equal to a boundary land
/// in the lower bin, matching the `x <= boundary` sample-split rule.
#[inline]
pub fn assign_bin(boundaries: &[f64], v: f64) -> usize {
    boundaries.partition_point(|&b| b < v)
}

/// Bin every feature of `x` on the node's sample space `rows`.
pub fn local_binning(x: &FeatureFrame, rows: &[usize], bins: usize) -> Result<BinFrame> {
    binning(x, None, rows, bins)
}

/// Row order of every column by value, computed once per frame so that
/// per-node binning can filter instead of sort.
#[derive(Clone, Debug)]
pub struct ColumnOrder {
    order: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
}

impl ColumnOrder {
    pub fn new(x: &FeatureFrame) -> Self {
        let order = (0..x.cols)
            .map(|j| {
                let mut o: Vec<u32> = (0..x.rows as u32).collect();
                o.sort_by(|&a, &b| x.at(a as usize, j).total_cmp(&x.at(b as usize, j)));
                o
            })
            .collect::<Vec<Vec<u32>>>();
        let values = order.iter().enumerate().map(|(j, o)| o.iter().map(|&i| x.at(i as usize, j)).collect()).collect();
        ColumnOrder { order, values }
    }
}

/// [`local_binning`] using a precomputed [`ColumnOrder`] of the same frame.
pub fn local_binning_ordered(x: &FeatureFrame, order: &ColumnOrder, rows: &[usize], bins: usize) -> Result<BinFrame> {
    if order.order.len() != x.cols || order.order.first().is_some_and(|o| o.len() != x.rows) {
        return Err(Error::Shape("column order built for another frame".into()));
    }
    binning(x, Some(order), rows, bins)
}

fn binning(x: &FeatureFrame, order: Option<&ColumnOrder>, rows: &[usize], bins: usize) -> Result<BinFrame> {
    if rows.is_empty() {
        return Err(Error::EmptySampleSpace);
    }
    if bins < 2 {
        return Err(Error::Param(format!("need at least 2 bins, got {bins}")));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= x.rows) {
        return Err(Error::Shape(format!("sample {bad} outside a frame of {} rows", x.rows)));
    }
    // filtering the full order beats sorting once the node holds a fair
    // share of the rows
    let filter = order.filter(|_| rows.len() * 8 >= x.rows);
    let mut mask = Vec::new();
    if filter.is_some() {
        mask = vec![false; x.rows];
        for &i in rows {
            mask[i] = true;
        }
    }
    let mut xbin = vec![-1i32; x.rows * x.cols];
    let mut boundaries = Vec::with_capacity(x.cols);
    let mut sorted = Vec::with_capacity(rows.len());
    for j in 0..x.cols {
        sorted.clear();
        match filter {
            Some(o) => sorted.extend(o.order[j].iter().zip(&o.values[j]).filter(|(&i, _)| mask[i as usize]).map(|(_, &v)| v)),
            None => {
                sorted.extend(rows.iter().map(|&i| x.at(i, j)));
                sorted.sort_by(f64::total_cmp);
            }
        }
        let b = boundaries_from_sorted(&sorted, bins);
        for &i in rows {
            xbin[i * x.cols + j] = assign_bin(&b, x.at(i, j)) as i32;
        }
        boundaries.push(b);
    }
    Ok(BinFrame {
        rows: x.rows,
        cols: x.cols,
        xbin,
        boundaries,
    })
}

/// Per-feature gradient histograms of one party: `g[j * B + b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub cols: usize,
    pub bins: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl Histogram {
    /// Split a revealed `(cols·B) × 2` aggregate into a histogram.
    pub fn from_pairs(cols: usize, bins: usize, gh: &[f64]) -> Result<Histogram> {
        if gh.len() != cols * bins * 2 {
            return Err(Error::Shape(format!("aggregate of {} values for {cols}x{bins}", gh.len())));
        }
        Ok(Histogram {
            cols,
            bins,
            g: gh.iter().step_by(2).copied().collect(),
            h: gh.iter().skip(1).step_by(2).copied().collect(),
        })
    }
}

/// `G[j][b] = Σ g_i` over rows with `bin(i, j) = b`.
pub fn aggregate(frame: &BinFrame, grad: &GradPair, bins: usize) -> Histogram {
    let mut g = vec![0.0; frame.cols * bins];
    let mut h = vec![0.0; frame.cols * bins];
    for i in 0..frame.rows {
        if frame.cols == 0 || frame.bin(i, 0) < 0 {
            continue;
        }
        for j in 0..frame.cols {
            let b = frame.bin(i, j);
            if b >= 0 {
                g[j * bins + b as usize] += grad.g[i];
                h[j * bins + b as usize] += grad.h[i];
            }
        }
    }
    Histogram {
        cols: frame.cols,
        bins,
        g,
        h,
    }
}

/// `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let (g, h) = (gl + gr, hl + hr);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// A chosen split: owner party index, feature, 1-based position `s` (left
/// takes bins `0..s`), and the statistics behind its gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitChoice {
    pub party: usize,
    pub feature: usize,
    pub position: usize,
    pub gain: f64,
    pub gl: f64,
    pub hl: f64,
    pub gr: f64,
    pub hr: f64,
}

/// Scan parties, features and positions for the highest-gain split.
///
/// Positions whose left or right side carries no hessian mass (an empty
/// child) are never chosen. Ties keep the first candidate in `(k, j, s)`
/// order. Returns `None` unless the best gain is positive.
pub fn best_split(hists: &[Histogram], params: &BoostParams) -> Option<SplitChoice> {
    let mut best: Option<SplitChoice> = None;
    for (k, hist) in hists.iter().enumerate() {
        let bins = hist.bins;
        for j in 0..hist.cols {
            let gs = &hist.g[j * bins..(j + 1) * bins];
            let hs = &hist.h[j * bins..(j + 1) * bins];
            let gt: f64 = gs.iter().sum();
            let ht: f64 = hs.iter().sum();
            let (mut gl, mut hl) = (0.0, 0.0);
            for s in 1..bins {
                gl += gs[s - 1];
                hl += hs[s - 1];
                let (gr, hr) = (gt - gl, ht - hl);
                if hl == 0.0 || hr == 0.0 {
                    continue;
                }
                let gain = split_gain(gl, hl, gr, hr, params.lambda, params.gamma);
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        party: k,
                        feature: j,
                        position: s,
                        gain,
                        gl,
                        hl,
                        gr,
                        hr,
                    });
                }
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

/// Rows of `rows` whose value is at most the split boundary.
pub fn sample_split(rows: &[usize], column: impl Fn(usize) -> f64, boundaries: &[f64], position: usize) -> Result<Vec<usize>> {
    let Some(&threshold) = position.checked_sub(1).and_then(|p| boundaries.get(p)) else {
        return Err(Error::MissingBoundary { feature: usize::MAX, position });
    };
    Ok(rows.iter().copied().filter(|&i| column(i) <= threshold).collect())
}

/// `-G / (H + λ)`; an empty leaf (no hessian mass and no regularisation)
/// gets weight 0.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d == 0.0 {
        0.0
    } else {
        -g / d
    }
}

/// Complement of `left` within `rows`; both slices ascending.
pub fn minus(rows: &[usize], left: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(rows.len() - left.len().min(rows.len()));
    let mut l = left.iter().peekable();
    for &i in rows {
        while l.peek().is_some_and(|&&x| x < i) {
            l.next();
        }
        if l.peek() != Some(&&i) {
            out.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(cols: Vec<Vec<f64>>) -> FeatureFrame {
        FeatureFrame::from_columns(1, &cols)
    }

    fn params(lambda: f64, gamma: f64) -> BoostParams {
        BoostParams {
            lambda,
            gamma,
            ..BoostParams::default()
        }
    }

    #[test]
    fn gradient_examples() {
        let g = gradients(&[0.3, 0.7], &[0.3, 0.7], Loss::Squared).unwrap();
        assert_eq!(g.g, vec![0.0, 0.0]);
        assert_eq!(g.h, vec![1.0, 1.0]);
        let g = gradients(&[0.0], &[0.0], Loss::Logistic).unwrap();
        assert_eq!((g.g[0], g.h[0]), (0.5, 0.25));
        let g = gradients(&[1.0, 0.0], &[0.5, 0.5], Loss::Squared).unwrap();
        assert_eq!(g.g, vec![-0.5, 0.5]);
        assert!(matches!(gradients(&[1.0], &[], Loss::Squared), Err(Error::Length(_))));
    }

    #[test]
    fn binning_of_one_to_eight() {
        let x = frame(vec![(1..=8).map(f64::from).collect()]);
        let rows: Vec<usize> = (0..8).collect();
        let b = local_binning(&x, &rows, 4).unwrap();
        assert_eq!(b.boundaries[0], vec![2.75, 4.5, 6.25]);
        // 1,2 <= 2.75 < 3,4 <= 4.5 < 5,6 <= 6.25 < 7,8
        assert_eq!(b.xbin, vec![0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn boundary_values_fall_in_lower_bin() {
        let b = [2.0, 4.0];
        assert_eq!(assign_bin(&b, 2.0), 0);
        assert_eq!(assign_bin(&b, 2.0001), 1);
        assert_eq!(assign_bin(&b, 4.0), 1);
        assert_eq!(assign_bin(&b, 9.0), 2);
    }

    #[test]
    fn constant_column_collapses() {
        let x = frame(vec![vec![3.0; 6]]);
        let b = local_binning(&x, &[0, 1, 2, 3, 4, 5], 4).unwrap();
        assert_eq!(b.boundaries[0], vec![3.0]);
        assert!(b.xbin.iter().all(|&v| v == 0));
    }

    #[test]
    fn rows_outside_sample_space_stay_minus_one() {
        let x = frame(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let b = local_binning(&x, &[1, 2], 4).unwrap();
        assert_eq!(b.xbin[0], -1);
        assert_eq!(b.xbin[3], -1);
        assert!(b.xbin[1] >= 0 && b.xbin[2] >= 0);
        assert!(matches!(local_binning(&x, &[], 4), Err(Error::EmptySampleSpace)));
    }

    #[test]
    fn aggregation_example() {
        let bf = BinFrame {
            rows: 4,
            cols: 1,
            xbin: vec![0, 0, 1, 1],
            boundaries: vec![vec![0.5]],
        };
        let grad = GradPair {
            g: vec![1.0, 2.0, 3.0, 4.0],
            h: vec![1.0; 4],
        };
        let hist = aggregate(&bf, &grad, 2);
        assert_eq!(hist.g, vec![3.0, 7.0]);
        assert_eq!(hist.h, vec![2.0, 2.0]);
    }

    #[test]
    fn split_examples() {
        let hist = |g: Vec<f64>, h: Vec<f64>| Histogram { cols: 1, bins: 2, g, h };
        // ½(1/2 + 1/2 − 4/3) = −1/6
        assert_eq!(best_split(&[hist(vec![1.0, 1.0], vec![1.0, 1.0])], &params(1.0, 0.0)), None);
        assert!((split_gain(1.0, 1.0, 1.0, 1.0, 1.0, 0.0) + 1.0 / 6.0).abs() < 1e-15);
        let s = best_split(&[hist(vec![2.0, -2.0], vec![1.0, 1.0])], &params(0.0, 0.0)).unwrap();
        assert_eq!((s.party, s.feature, s.position, s.gain), (0, 0, 1, 4.0));
        assert_eq!(best_split(&[hist(vec![2.0, -2.0], vec![1.0, 1.0])], &params(0.0, 5.0)), None);
    }

    #[test]
    fn ties_prefer_smallest_index() {
        let h = Histogram {
            cols: 2,
            bins: 2,
            g: vec![2.0, -2.0, 2.0, -2.0],
            h: vec![1.0; 4],
        };
        let s = best_split(&[h.clone(), h], &params(0.0, 0.0)).unwrap();
        assert_eq!((s.party, s.feature, s.position), (0, 0, 1));
    }

    #[test]
    fn empty_children_are_never_chosen() {
        // all mass in bin 0: every position leaves one side empty
        let h = Histogram {
            cols: 1,
            bins: 4,
            g: vec![5.0, 0.0, 0.0, 0.0],
            h: vec![3.0, 0.0, 0.0, 0.0],
        };
        assert_eq!(best_split(&[h], &params(0.0, 0.0)), None);
    }

    #[test]
    fn sample_split_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let rows = [0, 1, 2, 3];
        assert_eq!(sample_split(&rows, |i| x[i], &[2.0], 1).unwrap(), vec![0, 1]);
        assert!(sample_split(&rows, |i| x[i], &[0.5], 1).unwrap().is_empty());
        assert!(matches!(
            sample_split(&rows, |i| x[i], &[2.0], 2),
            Err(Error::MissingBoundary { .. })
        ));
    }

    #[test]
    fn leaf_weight_examples() {
        assert!((leaf_weight(2.0, 2.0, 1.0) + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(leaf_weight(0.0, 5.0, 1.0), 0.0);
        assert_eq!(leaf_weight(0.0, 0.0, 0.0), 0.0);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1.0, 10.0, 100.0, 1e6] {
            let w = leaf_weight(-3.0, 2.0, lambda).abs();
            assert!(w < prev);
            prev = w;
        }
    }

    proptest! {
        #[test]
        fn partition_identity(bins in proptest::collection::vec(0i32..4, 1..40), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let n = bins.len();
            let grad = GradPair { g: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), h: vec![1.0; n] };
            let bf = BinFrame { rows: n, cols: 1, xbin: bins, boundaries: vec![vec![0.0, 1.0, 2.0]] };
            let hist = aggregate(&bf, &grad, 4);
            let total: f64 = grad.g.iter().sum();
            prop_assert!((hist.g.iter().sum::<f64>() - total).abs() < 1e-9);
            prop_assert_eq!(hist.h.iter().sum::<f64>(), n as f64);
        }

        #[test]
        fn split_partitions_rows(xs in proptest::collection::vec(-5.0f64..5.0, 2..50), pos in 1usize..8) {
            let x = FeatureFrame::from_columns(1, &[xs.clone()]);
            let rows: Vec<usize> = (0..xs.len()).collect();
            let bf = local_binning(&x, &rows, 8).unwrap();
            if let Ok(left) = sample_split(&rows, |i| xs[i], &bf.boundaries[0], pos) {
                let right = minus(&rows, &left);
                prop_assert_eq!(left.len() + right.len(), rows.len());
                // left side is exactly the rows binned below the position
                for &i in &left { prop_assert!((bf.bin(i, 0) as usize) < pos); }
                for &i in &right { prop_assert!((bf.bin(i, 0) as usize) >= pos); }
            }
        }

        #[test]
        fn ordered_binning_matches(xs in proptest::collection::vec(-3.0f64..3.0, 2..80), keep in proptest::collection::vec(any::<bool>(), 80), bins in 2usize..12) {
            let x = FeatureFrame::from_columns(1, &[xs.iter().map(|v| (v * 4.0).round() / 4.0).collect(), xs.clone()]);
            let mut rows: Vec<usize> = (0..xs.len()).filter(|&i| keep[i]).collect();
            if rows.is_empty() { rows.push(0); }
            let order = ColumnOrder::new(&x);
            prop_assert_eq!(local_binning_ordered(&x, &order, &rows, bins).unwrap(), local_binning(&x, &rows, bins).unwrap());
        }

        #[test]
        fn boundaries_strictly_increase(xs in proptest::collection::vec(-3.0f64..3.0, 1..60), bins in 2usize..20) {
            let b = quantile_boundaries(xs.into_iter(), bins);
            prop_assert!(b.len() < bins);
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
