//! Forecast error metrics on normalized power, reported in percent of
//! installed capacity.

use crate::error::{Error, Result};

fn check(x: &[f64], xhat: &[f64]) -> Result<()> {
    if x.len() != xhat.len() || x.is_empty() {
        return Err(Error::Length(format!("{} actuals vs {} predictions", x.len(), xhat.len())));
    }
    Ok(())
}

/// Root mean square error, ×100.
pub fn rmse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check(x, xhat)?;
    let mse = x.iter().zip(xhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    Ok(100.0 * mse.sqrt())
}

/// Mean absolute error, ×100.
pub fn mae(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check(x, xhat)?;
    Ok(100.0 * x.iter().zip(xhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(rmse(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[0.1, -0.1]).unwrap() - 10.0).abs() < 1e-12);
        assert!((mae(&[0.0, 0.0], &[0.1, -0.1]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(rmse(&[1.0], &[]), Err(Error::Length(_))));
        assert!(matches!(mae(&[], &[]), Err(Error::Length(_))));
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (r, m) = (rmse(&x, &y).unwrap(), mae(&x, &y).unwrap());
            prop_assert!(r + 1e-12 >= m);
            let sum: f64 = x.iter().zip(&y).map(|(a, b)| a - b).sum();
            prop_assert!(r + 1e-9 >= 100.0 * sum.abs() / x.len() as f64);
        }

        #[test]
        fn mae_is_homogeneous(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let y2: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + 2.0 * (b - a)).collect();
            prop_assert!((mae(&x, &y2).unwrap() - 2.0 * mae(&x, &y).unwrap()).abs() < 1e-9);
        }
    }
}
