//! Per-farm time series: CSV ingestion, lagged feature frames, alignment
//! across farms, and a synthetic generator for correlated wind clusters.

mod features;
mod synth;

pub use features::{align, build_features, FeatureFrame, FeatureSpec, LabelFrame};
pub use synth::{power_curve, synth_cluster, synth_mixed_cluster, ClusterSpec, MixedCluster};

use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid spacing of every series, in seconds.
pub const STEP_SECONDS: i64 = 15 * 60;

/// Readings above capacity (or below zero) by at most this fraction of
/// capacity are clipped; anything further out is rejected.
pub const CLIP_TOLERANCE: f64 = 0.01;

/// One farm's history on a regular 15-minute grid.
///
/// Steps missing from the input are kept as gaps (`present[t] == false`) so
/// that index arithmetic on the grid stays valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarmSeries {
    pub farm_id: u32,
    /// Unix seconds of step 0.
    pub start: i64,
    /// Normalized power in `[0, 1]`; meaningless where `present` is false.
    pub power: Vec<f64>,
    pub present: Vec<bool>,
    pub capacity: f64,
    /// `len × k` row-major weather forecast values.
    pub nwp: Vec<f64>,
    pub nwp_vars: usize,
}

impl FarmSeries {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn timestamp(&self, t: usize) -> i64 {
        self.start + t as i64 * STEP_SECONDS
    }

    pub fn nwp_at(&self, t: usize) -> &[f64] {
        &self.nwp[t * self.nwp_vars..(t + 1) * self.nwp_vars]
    }

    /// The last `steps` grid points, for recent-history statistics.
    pub fn tail(&self, steps: usize) -> FarmSeries {
        let from = self.len().saturating_sub(steps);
        self.slice(from, self.len())
    }

    pub fn slice(&self, from: usize, to: usize) -> FarmSeries {
        FarmSeries {
            farm_id: self.farm_id,
            start: self.timestamp(from),
            power: self.power[from..to].to_vec(),
            present: self.present[from..to].to_vec(),
            capacity: self.capacity,
            nwp: self.nwp[from * self.nwp_vars..to * self.nwp_vars].to_vec(),
            nwp_vars: self.nwp_vars,
        }
    }

    /// Write the series back out in the ingest CSV schema (power in MW).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        let mut header = vec!["timestamp".to_string(), "power".to_string()];
        header.extend((1..=self.nwp_vars).map(|v| format!("nwp_{v}")));
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for t in 0..self.len() {
            if !self.present[t] {
                continue;
            }
            let ts = DateTime::from_timestamp(self.timestamp(t), 0)
                .ok_or_else(|| Error::Grid(format!("timestamp {} out of range", self.timestamp(t))))?;
            let mut rec = vec![ts.format("%Y-%m-%dT%H:%M:%SZ").to_string(), format!("{}", self.power[t] * self.capacity)];
            rec.extend(self.nwp_at(t).iter().map(|v| format!("{v}")));
            w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc().timestamp());
        }
    }
    Err(Error::Format(format!("unparseable timestamp {s:?}")))
}

fn parse_cell(s: &str, line: u64, what: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Format(format!("line {line}: bad {what} value {s:?}")))
}

/// Read a farm CSV with header `timestamp,power,nwp_1..nwp_k`.
///
/// Timestamps must sit on the 15-minute grid and be strictly increasing;
/// missing grid steps and empty cells become gaps. Power is normalized by
/// `capacity`.
pub fn ingest_csv(path: &Path, farm_id: u32, capacity: f64) -> Result<FarmSeries> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, farm_id, capacity)
}

pub fn ingest_reader<R: Read>(reader: R, farm_id: u32, capacity: f64) -> Result<FarmSeries> {
    if !(capacity > 0.0) {
        return Err(Error::Param(format!("capacity must be positive, got {capacity}")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("timestamp") || !header[1].eq_ignore_ascii_case("power") {
        return Err(Error::Format(format!("expected header timestamp,power,nwp_1..nwp_k; got {:?}", header)));
    }
    let k = header.len() - 2;
    for (v, name) in header.iter().skip(2).enumerate() {
        if name != format!("nwp_{}", v + 1) {
            return Err(Error::Format(format!("column {} should be nwp_{}, got {name:?}", v + 3, v + 1)));
        }
    }

    let mut rows: Vec<(i64, Option<f64>, Vec<f64>, bool)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        if rec.len() != k + 2 {
            return Err(Error::Format(format!("line {line}: {} fields, expected {}", rec.len(), k + 2)));
        }
        let ts = parse_timestamp(&rec[0])?;
        let dt = DateTime::from_timestamp(ts, 0).ok_or_else(|| Error::Grid(format!("line {line}: timestamp out of range")))?;
        if dt.second() != 0 || dt.minute() % 15 != 0 {
            return Err(Error::Grid(format!("line {line}: {} is off the 15-minute grid", &rec[0])));
        }
        if let Some((prev, ..)) = rows.last() {
            if ts == *prev {
                return Err(Error::Grid(format!("line {line}: duplicate timestamp {}", &rec[0])));
            }
            if ts < *prev {
                return Err(Error::Grid(format!("line {line}: timestamp {} goes backwards", &rec[0])));
            }
        }
        let p = parse_cell(&rec[1], line, "power")?;
        let p = match p {
            Some(p) => {
                let tol = CLIP_TOLERANCE * capacity;
                if p < -tol || p > capacity + tol {
                    return Err(Error::Range {
                        value: p,
                        limit: capacity,
                    });
                }
                Some(p.clamp(0.0, capacity) / capacity)
            }
            None => None,
        };
        let mut nwp = Vec::with_capacity(k);
        let mut ok = true;
        for v in 0..k {
            match parse_cell(&rec[v + 2], line, "nwp")? {
                Some(x) => nwp.push(x),
                None => {
                    nwp.push(0.0);
                    ok = false;
                }
            }
        }
        rows.push((ts, p, nwp, ok));
    }
    let Some(&(start, ..)) = rows.first() else {
        return Err(Error::Length("csv has no data rows".into()));
    };
    let end = rows.last().unwrap().0;
    let len = ((end - start) / STEP_SECONDS + 1) as usize;
    let mut s = FarmSeries {
        farm_id,
        start,
        power: vec![0.0; len],
        present: vec![false; len],
        capacity,
        nwp: vec![0.0; len * k],
        nwp_vars: k,
    };
    for (ts, p, nwp, ok) in rows {
        let t = ((ts - start) / STEP_SECONDS) as usize;
        if let (Some(p), true) = (p, ok) {
            s.power[t] = p;
            s.present[t] = true;
        }
        s.nwp[t * k..(t + 1) * k].copy_from_slice(&nwp);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(body: &str) -> Result<FarmSeries> {
        ingest_reader(body.as_bytes(), 1, 10.0)
    }

    #[test]
    fn four_grid_rows_accepted() {
        let s = csv(
            "timestamp,power,nwp_1\n\
             2024-01-01T00:00:00Z,1.0,5\n\
             2024-01-01T00:15:00Z,2.0,6\n\
             2024-01-01T00:30:00Z,3.0,7\n\
             2024-01-01T00:45:00Z,4.0,8\n",
        )
        .unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.power, vec![0.1, 0.2, 0.3, 0.4]);
        assert!(s.present.iter().all(|&p| p));
        assert_eq!(s.nwp_at(2), &[7.0]);
    }

    #[test]
    fn duplicate_timestamp_is_grid_error() {
        let r = csv("timestamp,power\n2024-01-01T00:00:00Z,1\n2024-01-01T00:00:00Z,1\n");
        assert!(matches!(r, Err(Error::Grid(_))));
    }

    #[test]
    fn off_grid_timestamp_is_grid_error() {
        let r = csv("timestamp,power\n2024-01-01T00:07:00Z,1\n");
        assert!(matches!(r, Err(Error::Grid(_))));
    }

    #[test]
    fn power_beyond_clip_tolerance_is_range_error() {
        // 1.02 x capacity is outside the 1% band
        let r = csv("timestamp,power\n2024-01-01T00:00:00Z,10.2\n");
        assert!(matches!(r, Err(Error::Range { .. })));
        // 1.005 x capacity is clipped to 1
        let s = csv("timestamp,power\n2024-01-01T00:00:00Z,10.05\n2024-01-01T00:15:00Z,-0.05\n").unwrap();
        assert_eq!(s.power, vec![1.0, 0.0]);
    }

    #[test]
    fn missing_steps_become_gaps() {
        let s = csv(
            "timestamp,power\n2024-01-01 00:00,1\n2024-01-01 00:15,\n2024-01-01 01:00,2\n",
        )
        .unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.present, vec![true, false, false, false, true]);
    }

    #[test]
    fn bad_header_is_format_error() {
        assert!(matches!(csv("time,power\n"), Err(Error::Format(_))));
        assert!(matches!(csv("timestamp,power,wind\n"), Err(Error::Format(_))));
        assert!(matches!(
            csv("timestamp,power\n2024-01-01T00:00:00Z,abc\n"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let s = synth_cluster(&ClusterSpec {
            n_farms: 1,
            steps: 50,
            spatial_corr: 0.5,
            seed: 3,
            ..ClusterSpec::default()
        })
        .unwrap()
        .remove(0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        s.write_csv(&p).unwrap();
        let back = ingest_csv(&p, s.farm_id, s.capacity).unwrap();
        assert_eq!(back.len(), s.len());
        assert_eq!(back.start, s.start);
        for t in 0..s.len() {
            assert!((back.power[t] - s.power[t]).abs() < 1e-12);
        }
    }
}
