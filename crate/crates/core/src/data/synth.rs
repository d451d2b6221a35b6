//! Synthetic wind clusters.
//!
//! A regional wind process drifts across the cluster: farm `i` sees it
//! `lag_i` steps late, mixed with farm-local turbulence. Upwind farms'
//! power history therefore carries information about a downwind farm's
//! future that its own history and its (noisy) forecast do not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FarmSeries;
use crate::error::{Error, Result};

const CUT_IN: f64 = 3.0;
const RATED: f64 = 12.0;
const CUT_OUT: f64 = 25.0;

/// 2023-01-01T00:00:00Z
const EPOCH: i64 = 1_672_531_200;

/// Normalized output of a generic turbine: cubic between cut-in and rated
/// speed, flat to cut-out.
pub fn power_curve(w: f64) -> f64 {
    if !(CUT_IN..CUT_OUT).contains(&w) {
        0.0
    } else if w >= RATED {
        1.0
    } else {
        (w.powi(3) - CUT_IN.powi(3)) / (RATED.powi(3) - CUT_IN.powi(3))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSpec {
    pub n_farms: usize,
    pub steps: usize,
    /// Share of each farm's wind variance explained by the regional process.
    pub spatial_corr: f64,
    pub seed: u64,
    /// Delay, in steps, between the first and the last farm along the wind.
    pub max_lag: usize,
    pub mean_wind: f64,
    pub wind_std: f64,
    /// Per-step autocorrelation of the wind processes.
    pub persistence: f64,
    /// Standard deviation of the wind-speed forecast error.
    pub nwp_error: f64,
    pub capacity: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            n_farms: 5,
            steps: 60 * 96,
            spatial_corr: 0.9,
            seed: 0,
            max_lag: 16,
            mean_wind: 8.0,
            wind_std: 3.5,
            persistence: 0.98,
            nwp_error: 2.0,
            capacity: 100.0,
        }
    }
}

#[derive(Clone, Copy)]
struct Climate {
    mean: f64,
    std: f64,
    phi: f64,
}

fn ar1(c: Climate, len: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let z = Normal::new(0.0, 1.0).unwrap();
    let innov = c.std * (1.0 - c.phi * c.phi).sqrt();
    let mut x = c.mean + c.std * z.sample(rng);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(x);
        x = c.mean + c.phi * (x - c.mean) + innov * z.sample(rng);
    }
    out
}

/// Direction random walk, radians.
fn heading(len: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let z = Normal::new(0.0, 0.04).unwrap();
    let mut th = rng.random_range(0.0..std::f64::consts::TAU);
    (0..len)
        .map(|_| {
            th += z.sample(rng);
            th
        })
        .collect()
}

struct Region {
    wind: Vec<f64>,
    dir: Vec<f64>,
    climate: Climate,
    /// Number of leading samples before step 0 (to serve the largest lag).
    pad: usize,
}

fn region(c: Climate, steps: usize, pad: usize, rng: &mut ChaCha20Rng) -> Region {
    Region {
        wind: ar1(c, steps + pad, rng),
        dir: heading(steps + pad, rng),
        climate: c,
        pad,
    }
}

fn farm(id: u32, r: &Region, lag: usize, mix: f64, spec: &ClusterSpec, rng: &mut ChaCha20Rng) -> FarmSeries {
    let steps = spec.steps;
    let local = ar1(r.climate, steps, rng);
    let err = ar1(
        Climate {
            mean: 0.0,
            std: spec.nwp_error,
            phi: 0.97,
        },
        steps,
        rng,
    );
    let jitter = Normal::new(0.0, 0.15).unwrap();
    let (a, b) = (mix.sqrt(), (1.0 - mix).sqrt());
    let mut power = Vec::with_capacity(steps);
    let mut nwp = Vec::with_capacity(steps * 3);
    for t in 0..steps {
        let src = t + r.pad - lag;
        let w = (r.climate.mean + a * (r.wind[src] - r.climate.mean) + b * (local[t] - r.climate.mean)).max(0.0);
        power.push(power_curve(w));
        let dir = r.dir[src] + jitter.sample(rng);
        nwp.push((w + err[t]).max(0.0));
        nwp.push(dir.sin());
        nwp.push(dir.cos());
    }
    FarmSeries {
        farm_id: id,
        start: EPOCH,
        present: vec![true; steps],
        power,
        capacity: spec.capacity,
        nwp,
        nwp_vars: 3,
    }
}

fn check(spec: &ClusterSpec) -> Result<()> {
    if !(0.0..1.0).contains(&spec.spatial_corr) {
        return Err(Error::Param(format!("spatial_corr must be in [0, 1), got {}", spec.spatial_corr)));
    }
    if spec.n_farms == 0 || spec.steps == 0 {
        return Err(Error::Param("empty cluster".into()));
    }
    if !(0.0..1.0).contains(&spec.persistence) || spec.wind_std <= 0.0 {
        return Err(Error::Param("wind process needs 0 <= persistence < 1 and positive std".into()));
    }
    Ok(())
}

/// Farms `1..=n` with lags spread evenly over `0..=max_lag`; the last farm is
/// the most downwind one.
pub fn synth_cluster(spec: &ClusterSpec) -> Result<Vec<FarmSeries>> {
    check(spec)?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let c = Climate {
        mean: spec.mean_wind,
        std: spec.wind_std,
        phi: spec.persistence,
    };
    let r = region(c, spec.steps, spec.max_lag, &mut rng);
    let n = spec.n_farms;
    Ok((0..n)
        .map(|i| {
            let lag = if n == 1 { 0 } else { i * spec.max_lag / (n - 1) };
            farm(i as u32 + 1, &r, lag, spec.spatial_corr, spec, &mut rng)
        })
        .collect())
}

/// A cluster with a correlated core and unrelated outsiders.
#[derive(Clone, Debug)]
pub struct MixedCluster {
    pub farms: Vec<FarmSeries>,
    /// Ids of farms driven by the shared regional process.
    pub correlated: Vec<u32>,
    /// Ids of farms each driven by their own, differently tuned process.
    pub independent: Vec<u32>,
}

/// `spec.n_farms` correlated farms (ids `1..=n`) followed by `n_independent`
/// farms (ids after them). The outsiders sit in a windier region (mean wind
/// 6 to 8 m/s above the core's), each with its own weather realization.
pub fn synth_mixed_cluster(spec: &ClusterSpec, n_independent: usize) -> Result<MixedCluster> {
    let mut farms = synth_cluster(spec)?;
    let correlated: Vec<u32> = farms.iter().map(|f| f.farm_id).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut independent = Vec::new();
    for i in 0..n_independent {
        let shift = rng.random_range(6.0..8.0);
        let c = Climate {
            mean: (spec.mean_wind + shift).max(3.5),
            std: spec.wind_std * rng.random_range(0.7..1.3),
            phi: spec.persistence,
        };
        let r = region(c, spec.steps, 0, &mut rng);
        let id = (spec.n_farms + i) as u32 + 1;
        farms.push(farm(id, &r, 0, spec.spatial_corr, spec, &mut rng));
        independent.push(id);
    }
    Ok(MixedCluster {
        farms,
        correlated,
        independent,
    })
}
