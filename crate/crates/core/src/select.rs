//! Participant selection by multi-kernel maximum mean discrepancy.
//!
//! Each farm is represented by short windows of its recent normalized power.
//! Pairwise MMD² between those window sets feeds a thresholded Gaussian
//! adjacency; the target's non-zero neighbours become the participants.

use serde::{Deserialize, Serialize};

use crate::data::FarmSeries;
use crate::error::{Error, Result};

pub const DEFAULT_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_BETA: f64 = 0.85;

/// Windows of one farm's normalized power, all of the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(windows: &[Vec<f64>]) -> Result<Self> {
        let dim = windows.first().map(Vec::len).ok_or(Error::EmptySet)?;
        if windows.iter().any(|w| w.len() != dim) {
            return Err(Error::Shape("windows of unequal length".into()));
        }
        Ok(SampleSet {
            dim,
            data: windows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scaled(&self, c: f64) -> SampleSet {
        SampleSet {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub len: usize,
    pub stride: usize,
    /// How far back from the end of the series windows are drawn.
    pub history_steps: usize,
    pub max_windows: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            len: 16,
            stride: 4,
            history_steps: 14 * 96,
            max_windows: 512,
        }
    }
}

/// Sliding windows over the recent history of `s`, skipping any window that
/// touches a gap; evenly thinned to `max_windows`.
pub fn sample_windows(s: &FarmSeries, spec: &WindowSpec) -> Result<SampleSet> {
    if spec.len == 0 || spec.stride == 0 {
        return Err(Error::Param("window length and stride must be positive".into()));
    }
    let recent = s.tail(spec.history_steps);
    let mut windows = Vec::new();
    let mut t = 0;
    while t + spec.len <= recent.len() {
        if recent.present[t..t + spec.len].iter().all(|&p| p) {
            windows.push(recent.power[t..t + spec.len].to_vec());
        }
        t += spec.stride;
    }
    if windows.len() > spec.max_windows {
        let n = windows.len();
        windows = (0..spec.max_windows).map(|i| windows[i * n / spec.max_windows].clone()).collect();
    }
    if windows.is_empty() {
        return Err(Error::Length(format!("farm {}: no gap-free window in recent history", s.farm_id)));
    }
    SampleSet::new(&windows)
}

/// Sum of Gaussian kernels `exp(-d² / (2 (base·m)²))` over the multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub base_bandwidth: f64,
    pub multipliers: Vec<f64>,
}

impl KernelSpec {
    pub fn new(base_bandwidth: f64, multipliers: Vec<f64>) -> Result<Self> {
        if multipliers.is_empty() || !(base_bandwidth > 0.0) || multipliers.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Param("kernel bandwidths must be positive".into()));
        }
        Ok(KernelSpec {
            base_bandwidth,
            multipliers,
        })
    }

    /// Base bandwidth = median pairwise distance of the pooled windows
    /// (evenly thinned to at most 1000 windows).
    pub fn median_heuristic(sets: &[SampleSet], multipliers: &[f64]) -> Result<Self> {
        let pooled: Vec<&[f64]> = sets.iter().flat_map(|s| (0..s.len()).map(move |i| s.window(i))).collect();
        if pooled.len() < 2 {
            return Err(Error::EmptySet);
        }
        let cap = 1000.min(pooled.len());
        let pick: Vec<&[f64]> = (0..cap).map(|i| pooled[i * pooled.len() / cap]).collect();
        let mut d: Vec<f64> = Vec::with_capacity(cap * (cap - 1) / 2);
        for i in 0..cap {
            for j in i + 1..cap {
                d.push(sq_dist(pick[i], pick[j]).sqrt());
            }
        }
        let mid = d.len() / 2;
        let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
        // all windows identical: any positive bandwidth gives the same answer
        let base = if *m > 0.0 { *m } else { 1.0 };
        KernelSpec::new(base, multipliers.to_vec())
    }

    fn inv_two_sigma2(&self) -> Vec<f64> {
        self.multipliers
            .iter()
            .map(|m| 1.0 / (2.0 * (self.base_bandwidth * m).powi(2)))
            .collect()
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean kernel value over all pairs drawn from `a` × `b`.
fn mean_kernel(a: &SampleSet, b: &SampleSet, coef: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let wi = a.window(i);
        for j in 0..b.len() {
            let d2 = sq_dist(wi, b.window(j));
            total += coef.iter().map(|c| (-d2 * c).exp()).sum::<f64>();
        }
    }
    total / (a.len() * b.len()) as f64
}

fn check_sets(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("window lengths {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Biased (V-statistic) MMD² estimate, clamped at zero.
pub fn mmd2(d1: &SampleSet, d2: &SampleSet, k: &KernelSpec) -> Result<f64> {
    check_sets(d1, d2)?;
    let coef = k.inv_two_sigma2();
    let v = mean_kernel(d1, d1, &coef) + mean_kernel(d2, d2, &coef) - 2.0 * mean_kernel(d1, d2, &coef);
    Ok(v.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub a: Vec<Vec<f64>>,
    pub mmd2: Vec<Vec<f64>>,
    pub beta: f64,
    /// Standard deviation of the off-diagonal MMD² values.
    pub sigma: f64,
    pub mean: f64,
    /// Set when every pairwise distance is zero; `a` is then all ones.
    pub degenerate: bool,
}

/// Pairwise MMD² between farms, then [`adjacency_from_distances`].
pub fn adjacency(farms: &[SampleSet], beta: f64, k: &KernelSpec) -> Result<Adjacency> {
    let n = farms.len();
    if n < 2 {
        return Err(Error::Param(format!("adjacency needs at least two farms, got {n}")));
    }
    for f in farms {
        check_sets(f, &farms[0])?;
    }
    let coef = k.inv_two_sigma2();
    let selfk: Vec<f64> = farms.iter().map(|f| mean_kernel(f, f, &coef)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let cross: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&(i, j)| {
                let (fi, fj, coef) = (&farms[i], &farms[j], &coef);
                s.spawn(move || mean_kernel(fi, fj, coef))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("mmd worker panicked")).collect()
    });
    let mut d = vec![vec![0.0; n]; n];
    for (&(i, j), c) in pairs.iter().zip(cross) {
        let v = (selfk[i] + selfk[j] - 2.0 * c).max(0.0);
        d[i][j] = v;
        d[j][i] = v;
    }
    adjacency_from_distances(d, beta)
}

/// `A_ij = exp(-MMD²_ij / σ²)` where `MMD²_ij ≤ β · mean`, else 0, with mean
/// and σ (population standard deviation) taken over the off-diagonal pairs.
pub fn adjacency_from_distances(d: Vec<Vec<f64>>, beta: f64) -> Result<Adjacency> {
    let n = d.len();
    if n < 2 || d.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("distance matrix must be square with n >= 2".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::Param(format!("beta must be non-negative, got {beta}")));
    }
    let off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[i][j]).collect();
    let mean = off.iter().sum::<f64>() / off.len() as f64;
    let sigma = (off.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / off.len() as f64).sqrt();
    if off.iter().all(|&v| v == 0.0) {
        log::warn!("all pairwise MMD² are zero; adjacency is all ones");
        return Ok(Adjacency {
            a: vec![vec![1.0; n]; n],
            mmd2: d,
            beta,
            sigma,
            mean,
            degenerate: true,
        });
    }
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
        for j in i + 1..n {
            let v = d[i][j];
            let w = if v <= beta * mean {
                if sigma > 0.0 {
                    (-v / (sigma * sigma)).exp()
                } else if v == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.0
            };
            a[i][j] = w;
            a[j][i] = w;
        }
    }
    Ok(Adjacency {
        a,
        mmd2: d,
        beta,
        sigma,
        mean,
        degenerate: false,
    })
}

/// Indices `j != target` with `A[target][j] != 0`, strongest first, ties by
/// ascending index.
pub fn select_participants(adj: &Adjacency, target: usize) -> Result<Vec<usize>> {
    let row = adj
        .a
        .get(target)
        .ok_or_else(|| Error::Param(format!("target {target} out of range")))?;
    let mut out: Vec<usize> = (0..row.len()).filter(|&j| j != target && row[j] != 0.0).collect();
    out.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn set(ws: &[&[f64]]) -> SampleSet {
        SampleSet::new(&ws.iter().map(|w| w.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_set(rng: &mut ChaCha20Rng, n: usize, dim: usize, shift: f64) -> SampleSet {
        let ws: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| (rng.random::<f64>() + shift).clamp(0.0, 1.0)).collect())
            .collect();
        SampleSet::new(&ws).unwrap()
    }

    /// Textbook double sums, written independently of `mean_kernel`.
    fn brute_mmd2(a: &SampleSet, b: &SampleSet, k: &KernelSpec) -> f64 {
        let kern = |x: &[f64], y: &[f64]| -> f64 {
            let mut d2 = 0.0;
            for t in 0..x.len() {
                d2 += (x[t] - y[t]).powi(2);
            }
            let mut s = 0.0;
            for m in &k.multipliers {
                let sig = k.base_bandwidth * m;
                s += (-d2 / (2.0 * sig * sig)).exp();
            }
            s
        };
        let (n, m) = (a.len() as f64, b.len() as f64);
        let mut xx = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                xx += kern(a.window(i), a.window(j));
            }
        }
        let mut yy = 0.0;
        for i in 0..b.len() {
            for j in 0..b.len() {
                yy += kern(b.window(i), b.window(j));
            }
        }
        let mut xy = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                xy += kern(a.window(i), b.window(j));
            }
        }
        xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)
    }

    #[test]
    fn two_point_closed_form() {
        let k = KernelSpec::new(1.0, vec![1.0]).unwrap();
        let v = mmd2(&set(&[&[0.0]]), &set(&[&[1.0]]), &k).unwrap();
        assert!((v - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-12);
        assert!((v - 0.78694).abs() < 1e-5);
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = random_set(&mut rng, 30, 16, 0.0);
        let k = KernelSpec::median_heuristic(&[a.clone()], &DEFAULT_MULTIPLIERS).unwrap();
        assert_eq!(mmd2(&a, &a, &k).unwrap(), 0.0);
    }

    #[test]
    fn matches_brute_force_on_30_windows() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for trial in 0..5 {
            let a = random_set(&mut rng, 30, 16, 0.0);
            let b = random_set(&mut rng, 30, 16, 0.1 * trial as f64);
            let k = KernelSpec::median_heuristic(&[a.clone(), b.clone()], &DEFAULT_MULTIPLIERS).unwrap();
            let fast = mmd2(&a, &b, &k).unwrap();
            let slow = brute_mmd2(&a, &b, &k);
            assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1e-300), "{fast} vs {slow}");
        }
    }

    #[test]
    fn empty_set_is_error() {
        assert!(matches!(SampleSet::new(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn two_identical_farms_give_all_ones() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = random_set(&mut rng, 10, 4, 0.0);
        let k = KernelSpec::median_heuristic(&[a.clone()], &DEFAULT_MULTIPLIERS).unwrap();
        let adj = adjacency(&[a.clone(), a], 0.85, &k).unwrap();
        assert!(adj.degenerate);
        assert_eq!(adj.a, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn outlier_farm_is_thresholded_out() {
        // farm 3 sits at 10x the distance of the (1,2) pair
        let d = vec![vec![0.0, 1.0, 10.0], vec![1.0, 0.0, 10.0], vec![10.0, 10.0, 0.0]];
        let adj = adjacency_from_distances(d, 1.0).unwrap();
        assert_eq!(adj.mean, 7.0);
        assert_eq!(adj.a[0][2], 0.0);
        assert_eq!(adj.a[2][0], 0.0);
        assert_eq!(adj.a[1][2], 0.0);
        assert_eq!(adj.a[2][1], 0.0);
        let sigma2 = adj.sigma * adj.sigma;
        assert!((sigma2 - 18.0).abs() < 1e-12);
        assert!((adj.a[0][1] - (-1.0f64 / 18.0).exp()).abs() < 1e-15);
    }

    fn adj_from_rows(a: Vec<Vec<f64>>) -> Adjacency {
        Adjacency {
            a,
            mmd2: vec![],
            beta: 0.85,
            sigma: 1.0,
            mean: 1.0,
            degenerate: false,
        }
    }

    #[test]
    fn selection_rules() {
        let adj = adj_from_rows(vec![
            vec![1.0, 0.9, 0.9, 0.0],
            vec![0.9, 1.0, 0.5, 0.0],
            vec![0.9, 0.5, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        // ids 1..4 are indices 0..3
        assert_eq!(select_participants(&adj, 0).unwrap(), vec![1, 2]);
        assert_eq!(select_participants(&adj, 3).unwrap(), Vec::<usize>::new());
        assert_eq!(select_participants(&adj, 1).unwrap(), vec![0, 2]);
        assert!(select_participants(&adj, 4).is_err());
    }

    #[test]
    fn selection_is_scale_free() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let sets: Vec<SampleSet> = (0..5)
            .map(|i| random_set(&mut rng, 40, 8, if i < 3 { 0.0 } else { 0.3 * i as f64 }))
            .collect();
        let k = KernelSpec::median_heuristic(&sets, &DEFAULT_MULTIPLIERS).unwrap();
        let base = adjacency(&sets, 0.85, &k).unwrap();
        for c in [0.5, 3.0] {
            let scaled: Vec<SampleSet> = sets.iter().map(|s| s.scaled(c)).collect();
            let kc = KernelSpec::median_heuristic(&scaled, &DEFAULT_MULTIPLIERS).unwrap();
            assert!((kc.base_bandwidth - c * k.base_bandwidth).abs() < 1e-9);
            let adj = adjacency(&scaled, 0.85, &kc).unwrap();
            for t in 0..5 {
                assert_eq!(select_participants(&adj, t).unwrap(), select_participants(&base, t).unwrap());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn adjacency_is_symmetric_with_unit_diagonal(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sets: Vec<SampleSet> = (0..n).map(|_| {
                let shift = rng.random::<f64>() * 0.5;
                random_set(&mut rng, 12, 4, shift)
            }).collect();
            let k = KernelSpec::median_heuristic(&sets, &DEFAULT_MULTIPLIERS).unwrap();
            let adj = adjacency(&sets, 0.85, &k).unwrap();
            for i in 0..n {
                prop_assert_eq!(adj.a[i][i], 1.0);
                for j in 0..n {
                    prop_assert!((adj.a[i][j] - adj.a[j][i]).abs() <= 1e-12);
                    prop_assert!((0.0..=1.0).contains(&adj.a[i][j]));
                }
                prop_assert!(!select_participants(&adj, i).unwrap().contains(&i));
            }
        }

        #[test]
        fn mmd_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let a = random_set(&mut rng, 10, 3, 0.0);
            let b = random_set(&mut rng, 7, 3, 0.2);
            let k = KernelSpec::median_heuristic(&[a.clone(), b.clone()], &DEFAULT_MULTIPLIERS).unwrap();
            let ab = mmd2(&a, &b, &k).unwrap();
            let ba = mmd2(&b, &a, &k).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1e-12));
            prop_assert!(ab >= 0.0);
        }
    }
}
