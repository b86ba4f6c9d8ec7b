use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xy, Design};
use crate::error::{Error, Result};
use crate::linalg::ridge_centered;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Penalty {
    None,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    /// Training column means, the reference point of linear attributions.
    pub feature_means: Vec<f64>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// Exact attributions `beta_j * (x_j - mean_j)`; they sum to the
    /// prediction minus the prediction at the training mean.
    pub fn attributions(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(x.iter().zip(&self.feature_means))
            .map(|(b, (v, m))| b * (v - m))
            .collect()
    }
}

pub(crate) fn design_to_dmatrix(x: &Design<'_>) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.nrows(), x.ncols(), x.data())
}

pub(crate) fn means(x: &Design<'_>) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut m = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        for (a, v) in m.iter_mut().zip(x.row(i)) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Ordinary least squares; rank-deficient designs get the minimum-norm
/// solution.
pub fn fit_ols(x: &Design<'_>, y: &[f64]) -> Result<LinearModel> {
    fit_penalized_l2(x, y, 0.0, Penalty::None)
}

/// Ridge regression with the intercept left unpenalized.
pub fn fit_ridge(x: &Design<'_>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter(format!(
            "ridge lambda must be finite and >= 0, got {lambda}"
        )));
    }
    fit_penalized_l2(x, y, lambda, Penalty::Ridge { lambda })
}

fn fit_penalized_l2(x: &Design<'_>, y: &[f64], lambda: f64, penalty: Penalty) -> Result<LinearModel> {
    check_xy(x, y)?;
    let xm = design_to_dmatrix(x);
    let yv = DVector::from_column_slice(y);
    let (intercept, beta) = ridge_centered(&xm, &yv, lambda)?;
    Ok(LinearModel {
        coefficients: beta.iter().copied().collect(),
        intercept,
        penalty,
        feature_means: means(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_fit() {
        let data = vec![1.0, 2.0, 2.0, 0.5, 3.0, 1.0, 4.0, 4.0, 5.0, -1.0];
        let x = Design::new(&data, 5, 2).unwrap();
        let y: Vec<f64> = (0..5).map(|i| 3.0 + 2.0 * x.get(i, 0) - 0.5 * x.get(i, 1)).collect();
        let m = fit_ols(&x, &y).unwrap();
        for (i, want) in y.iter().enumerate() {
            assert!((m.predict_row(x.row(i)) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_penalty_shrinks_to_zero() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let x = Design::new(&data, 20, 2).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = fit_ridge(&x, &y, 1e9).unwrap();
        assert!(m.coefficients.iter().all(|b| b.abs() < 1e-6));
        assert!(fit_ridge(&x, &y, -1.0).is_err());
    }

    #[test]
    fn attributions_sum_to_centered_prediction() {
        let data = vec![1.0, 0.0, 2.0, 1.0, 0.0, 3.0, 5.0, 2.0];
        let x = Design::new(&data, 4, 2).unwrap();
        let y = vec![1.0, 2.0, 0.5, 4.0];
        let m = fit_ridge(&x, &y, 0.1).unwrap();
        let base = m.predict_row(&m.feature_means);
        for i in 0..4 {
            let phi: f64 = m.attributions(x.row(i)).iter().sum();
            assert!((phi + base - m.predict_row(x.row(i))).abs() < 1e-12);
        }
    }
}
