use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::FarmSeries;
use crate::error::{Error, Result};

/// Lag structure of a feature row: `lags` power values up to and including
/// `t`, then `nwp_steps` forecast steps `t+1..t+N` of every weather variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub lags: usize,
    pub nwp_steps: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { lags: 16, nwp_steps: 16 }
    }
}

/// One party's feature matrix, row-major, with rows keyed by timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub farm_id: u32,
    pub rows: usize,
    pub cols: usize,
    pub x: Vec<f64>,
    pub names: Vec<String>,
    /// Unix seconds of the forecast origin `t` of each row.
    pub sample_index: Vec<i64>,
}

impl FeatureFrame {
    /// Frame from equally long columns, rows indexed `0..n` on the 15-minute
    /// grid.
    pub fn from_columns(farm_id: u32, columns: &[Vec<f64>]) -> FeatureFrame {
        let rows = columns.first().map_or(0, Vec::len);
        let cols = columns.len();
        let mut x = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            x.extend(columns.iter().map(|c| c[i]));
        }
        FeatureFrame {
            farm_id,
            rows,
            cols,
            x,
            names: (0..cols).map(|j| format!("x{j}")).collect(),
            sample_index: (0..rows as i64).map(|i| i * super::STEP_SECONDS).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    /// Rows `from..to`, in order.
    pub fn rows_range(&self, from: usize, to: usize) -> FeatureFrame {
        FeatureFrame {
            farm_id: self.farm_id,
            rows: to - from,
            cols: self.cols,
            x: self.x[from * self.cols..to * self.cols].to_vec(),
            names: self.names.clone(),
            sample_index: self.sample_index[from..to].to_vec(),
        }
    }

    /// Keep only the rows whose timestamps appear in `index`, in that order.
    pub fn select(&self, index: &[i64]) -> Result<FeatureFrame> {
        let pos: HashMap<i64, usize> = self.sample_index.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let mut x = Vec::with_capacity(index.len() * self.cols);
        for t in index {
            let i = *pos
                .get(t)
                .ok_or_else(|| Error::Shape(format!("farm {} has no row at {t}", self.farm_id)))?;
            x.extend_from_slice(self.row(i));
        }
        Ok(FeatureFrame {
            farm_id: self.farm_id,
            rows: index.len(),
            cols: self.cols,
            x,
            names: self.names.clone(),
            sample_index: index.to_vec(),
        })
    }

    /// Horizontal concatenation of aligned frames, for centralized baselines.
    pub fn hstack(frames: &[FeatureFrame]) -> Result<FeatureFrame> {
        let first = frames.first().ok_or(Error::EmptySet)?;
        if frames.iter().any(|f| f.sample_index != first.sample_index) {
            return Err(Error::Shape("hstack of unaligned frames".into()));
        }
        let cols: usize = frames.iter().map(|f| f.cols).sum();
        let mut x = Vec::with_capacity(first.rows * cols);
        for i in 0..first.rows {
            for f in frames {
                x.extend_from_slice(f.row(i));
            }
        }
        let names = frames
            .iter()
            .flat_map(|f| f.names.iter().map(move |n| format!("f{}:{n}", f.farm_id)))
            .collect();
        Ok(FeatureFrame {
            farm_id: first.farm_id,
            rows: first.rows,
            cols,
            x,
            names,
            sample_index: first.sample_index.clone(),
        })
    }
}

/// Targets of the active party, one column per horizon (in steps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelFrame {
    pub horizons: Vec<usize>,
    pub y: Vec<Vec<f64>>,
    pub sample_index: Vec<i64>,
}

impl LabelFrame {
    pub fn horizon(&self, h: usize) -> Result<&[f64]> {
        let k = self
            .horizons
            .iter()
            .position(|&x| x == h)
            .ok_or_else(|| Error::Param(format!("horizon {h} not built")))?;
        Ok(&self.y[k])
    }

    pub fn rows_range(&self, from: usize, to: usize) -> LabelFrame {
        LabelFrame {
            horizons: self.horizons.clone(),
            y: self.y.iter().map(|c| c[from..to].to_vec()).collect(),
            sample_index: self.sample_index[from..to].to_vec(),
        }
    }

    pub fn select(&self, index: &[i64]) -> Result<LabelFrame> {
        let pos: HashMap<i64, usize> = self.sample_index.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let rows: Vec<usize> = index
            .iter()
            .map(|t| pos.get(t).copied().ok_or_else(|| Error::Shape(format!("no label row at {t}"))))
            .collect::<Result<_>>()?;
        Ok(LabelFrame {
            horizons: self.horizons.clone(),
            y: self.y.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            sample_index: index.to_vec(),
        })
    }
}

/// Lagged power and forecast features for every grid step `t` with a full
/// window, plus labels `P_{t+h}`. Rows touching a gap are dropped.
pub fn build_features(s: &FarmSeries, spec: &FeatureSpec, horizons: &[usize]) -> Result<(FeatureFrame, LabelFrame)> {
    let m = spec.lags;
    let n = spec.nwp_steps;
    if m == 0 {
        return Err(Error::Param("at least one power lag is required".into()));
    }
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::Param(format!("horizons must be positive steps, got {horizons:?}")));
    }
    let reach = horizons.iter().copied().max().unwrap().max(n);
    let len = s.len();
    if len < m + reach {
        return Err(Error::Length(format!(
            "farm {}: {len} steps cannot hold {m} lags and {reach} steps ahead",
            s.farm_id
        )));
    }
    let k = s.nwp_vars;
    let cols = m + n * k;
    let mut names = Vec::with_capacity(cols);
    for l in (0..m).rev() {
        names.push(if l == 0 { "p[t]".to_string() } else { format!("p[t-{l}]") });
    }
    for step in 1..=n {
        for v in 1..=k {
            names.push(format!("nwp{v}[t+{step}]"));
        }
    }

    let mut x = Vec::new();
    let mut y: Vec<Vec<f64>> = vec![Vec::new(); horizons.len()];
    let mut index = Vec::new();
    for t in (m - 1)..(len - reach) {
        let lags_ok = s.present[t + 1 - m..=t].iter().all(|&p| p);
        let ahead_ok = s.present[t + 1..=t + n].iter().all(|&p| p);
        let labels_ok = horizons.iter().all(|&h| s.present[t + h]);
        if !(lags_ok && ahead_ok && labels_ok) {
            continue;
        }
        x.extend_from_slice(&s.power[t + 1 - m..=t]);
        for step in 1..=n {
            x.extend_from_slice(s.nwp_at(t + step));
        }
        for (c, &h) in horizons.iter().enumerate() {
            y[c].push(s.power[t + h]);
        }
        index.push(s.timestamp(t));
    }
    if index.is_empty() {
        return Err(Error::Length(format!("farm {}: every candidate row touches a gap", s.farm_id)));
    }
    let rows = index.len();
    Ok((
        FeatureFrame {
            farm_id: s.farm_id,
            rows,
            cols,
            x,
            names,
            sample_index: index.clone(),
        },
        LabelFrame {
            horizons: horizons.to_vec(),
            y,
            sample_index: index,
        },
    ))
}

/// Restrict all frames to the timestamps they have in common, in ascending
/// time order.
pub fn align(frames: &[FeatureFrame]) -> Result<Vec<FeatureFrame>> {
    let first = frames.first().ok_or(Error::EmptySet)?;
    let mut common: BTreeSet<i64> = first.sample_index.iter().copied().collect();
    for f in &frames[1..] {
        let other: BTreeSet<i64> = f.sample_index.iter().copied().collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let index: Vec<i64> = common.into_iter().collect();
    frames.iter().map(|f| f.select(&index)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::STEP_SECONDS;
    use proptest::prelude::*;

    fn series(power: Vec<f64>, k: usize) -> FarmSeries {
        let len = power.len();
        FarmSeries {
            farm_id: 1,
            start: 1_700_000_100 - 1_700_000_100 % STEP_SECONDS,
            present: vec![true; len],
            power,
            capacity: 1.0,
            nwp: (0..len * k).map(|i| i as f64).collect(),
            nwp_vars: k,
        }
    }

    #[test]
    fn row_count_example() {
        let s = series((0..10).map(|i| i as f64 / 10.0).collect(), 1);
        let (f, l) = build_features(&s, &FeatureSpec { lags: 2, nwp_steps: 1 }, &[1]).unwrap();
        assert_eq!((f.rows, f.cols), (8, 3));
        // row 0 is t = 1: [p0, p1, nwp(2)], label p2
        assert_eq!(f.row(0), &[0.0, 0.1, 2.0]);
        assert_eq!(l.y[0][0], 0.2);
        assert_eq!(f.names, vec!["p[t-1]", "p[t]", "nwp1[t+1]"]);
    }

    #[test]
    fn persistence_features() {
        let s = series(vec![0.5, 0.6, 0.7, 0.8], 2);
        let (f, l) = build_features(&s, &FeatureSpec { lags: 1, nwp_steps: 0 }, &[1]).unwrap();
        assert_eq!(f.cols, 1);
        assert_eq!(f.x, vec![0.5, 0.6, 0.7]);
        assert_eq!(l.y[0], vec![0.6, 0.7, 0.8]);
    }

    #[test]
    fn constant_power_gives_constant_labels() {
        let s = series(vec![0.42; 40], 3);
        let (_, l) = build_features(&s, &FeatureSpec { lags: 4, nwp_steps: 2 }, &[1, 4, 8]).unwrap();
        assert!(l.y.iter().flatten().all(|&v| v == 0.42));
    }

    #[test]
    fn too_short_is_length_error() {
        let s = series(vec![0.1; 5], 1);
        let r = build_features(&s, &FeatureSpec { lags: 4, nwp_steps: 1 }, &[2]);
        assert!(matches!(r, Err(Error::Length(_))));
    }

    #[test]
    fn gaps_drop_rows() {
        let mut s = series((0..12).map(|i| i as f64 / 12.0).collect(), 1);
        s.present[5] = false;
        let (f, _) = build_features(&s, &FeatureSpec { lags: 2, nwp_steps: 1 }, &[1]).unwrap();
        // candidate t = 1..=10; t with 5 in {t-1, t, t+1} are dropped
        assert_eq!(f.rows, 10 - 3);
        let ts: Vec<i64> = f.sample_index.iter().map(|&x| (x - s.start) / STEP_SECONDS).collect();
        assert_eq!(ts, vec![1, 2, 3, 7, 8, 9, 10]);
    }

    #[test]
    fn no_label_leakage() {
        // a spike at step 20 must not appear in features of rows with t < 20
        let mut p = vec![0.1; 40];
        p[20] = 0.9;
        let s = series(p, 1);
        let (f, _) = build_features(&s, &FeatureSpec { lags: 4, nwp_steps: 2 }, &[4]).unwrap();
        for i in 0..f.rows {
            let t = (f.sample_index[i] - s.start) / STEP_SECONDS;
            let has_spike = f.row(i)[..4].contains(&0.9);
            assert_eq!(has_spike, (20..24).contains(&t), "row t={t}");
        }
    }

    fn frame(index: Vec<i64>) -> FeatureFrame {
        FeatureFrame {
            farm_id: 1,
            rows: index.len(),
            cols: 1,
            x: index.iter().map(|&t| t as f64).collect(),
            names: vec!["a".into()],
            sample_index: index,
        }
    }

    #[test]
    fn align_examples() {
        let a = frame(vec![1, 2, 3, 4]);
        assert_eq!(align(&[a.clone(), a.clone()]).unwrap(), vec![a.clone(), a.clone()]);
        let b = frame(vec![1, 2, 4]);
        let out = align(&[a.clone(), b]).unwrap();
        assert_eq!(out[0].sample_index, vec![1, 2, 4]);
        assert_eq!(out[0].x, vec![1.0, 2.0, 4.0]);
        let c = frame(vec![7, 8]);
        assert!(matches!(align(&[a, c]), Err(Error::EmptyIntersection)));
    }

    proptest! {
        #[test]
        fn align_is_idempotent(xs in proptest::collection::btree_set(0i64..200, 1..60),
                               ys in proptest::collection::btree_set(0i64..200, 1..60)) {
            let a = frame(xs.into_iter().collect());
            let b = frame(ys.into_iter().collect());
            if let Ok(once) = align(&[a, b]) {
                let twice = align(&once).unwrap();
                prop_assert_eq!(&once, &twice);
                prop_assert_eq!(&once[0].sample_index, &once[1].sample_index);
            }
        }

        #[test]
        fn column_count_is_m_plus_nk(m in 1usize..6, n in 0usize..5, k in 0usize..4) {
            let s = series((0..40).map(|i| (i % 7) as f64 / 7.0).collect(), k);
            let (f, _) = build_features(&s, &FeatureSpec { lags: m, nwp_steps: n }, &[1, 3]).unwrap();
            prop_assert_eq!(f.cols, m + n * k);
            prop_assert_eq!(f.x.len(), f.rows * f.cols);
        }
    }
}
