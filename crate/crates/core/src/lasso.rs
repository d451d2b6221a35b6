//! Plaintext L1-regularized linear regression, the linear baseline.
//!
//! Minimizes `1/(2n) ‖y − b − Xw‖² + α‖w‖₁` by cyclic coordinate descent
//! on standardized columns.

use serde::{Deserialize, Serialize};

use crate::data::FeatureFrame;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.00005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub alpha: f64,
    pub max_iter: usize,
    /// Stop once no coefficient moves by more than this in a sweep.
    pub tol: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            alpha: DEFAULT_ALPHA,
            max_iter: 2000,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lasso {
    pub intercept: f64,
    /// Coefficients on the original (unstandardized) columns.
    pub coef: Vec<f64>,
    pub iterations: usize,
}

fn soft(z: f64, a: f64) -> f64 {
    if z > a {
        z - a
    } else if z < -a {
        z + a
    } else {
        0.0
    }
}

impl Lasso {
    pub fn fit(x: &FeatureFrame, y: &[f64], p: &LassoParams) -> Result<Lasso> {
        if x.rows != y.len() {
            return Err(Error::Length(format!("{} rows vs {} labels", x.rows, y.len())));
        }
        if x.rows == 0 {
            return Err(Error::EmptySet);
        }
        if !(p.alpha >= 0.0) {
            return Err(Error::Param(format!("alpha must be non-negative, got {}", p.alpha)));
        }
        let (n, d) = (x.rows, x.cols);
        let nf = n as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            mean[j] = (0..n).map(|i| x.at(i, j)).sum::<f64>() / nf;
            let var = (0..n).map(|i| (x.at(i, j) - mean[j]).powi(2)).sum::<f64>() / nf;
            scale[j] = var.sqrt();
        }
        // column-major standardized copy; constant columns stay zero
        let z: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                (0..n)
                    .map(|i| if scale[j] > 0.0 { (x.at(i, j) - mean[j]) / scale[j] } else { 0.0 })
                    .collect()
            })
            .collect();
        let ymean = y.iter().sum::<f64>() / nf;
        let mut r: Vec<f64> = y.iter().map(|v| v - ymean).collect();
        let mut w = vec![0.0; d];
        let mut iterations = 0;
        for it in 0..p.max_iter {
            iterations = it + 1;
            let mut moved: f64 = 0.0;
            for j in 0..d {
                if scale[j] == 0.0 {
                    continue;
                }
                let zj = &z[j];
                let rho = zj.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / nf + w[j];
                let new = soft(rho, p.alpha);
                let delta = new - w[j];
                if delta != 0.0 {
                    for (ri, zi) in r.iter_mut().zip(zj) {
                        *ri -= delta * zi;
                    }
                    w[j] = new;
                    moved = moved.max(delta.abs());
                }
            }
            if moved < p.tol {
                break;
            }
        }
        let coef: Vec<f64> = (0..d).map(|j| if scale[j] > 0.0 { w[j] / scale[j] } else { 0.0 }).collect();
        let intercept = ymean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
        Ok(Lasso {
            intercept,
            coef,
            iterations,
        })
    }

    pub fn predict(&self, x: &FeatureFrame) -> Result<Vec<f64>> {
        if x.cols != self.coef.len() {
            return Err(Error::Shape(format!("{} columns for {} coefficients", x.cols, self.coef.len())));
        }
        Ok((0..x.rows)
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }
}
