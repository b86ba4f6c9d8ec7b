use serde::{Deserialize, Serialize};

use super::linear::{means, LinearModel, Penalty};
use super::{check_xy, Design};
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const COEF_TOL: f64 = 1e-8;
pub const KKT_TOL: f64 = 1e-6;

/// Columns centered and scaled to unit population variance. Constant
/// columns keep scale 0 and are excluded from the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

pub fn standardize(x: &Design<'_>) -> Standardization {
    let means = means(x);
    let n = x.nrows() as f64;
    let mut var = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        for (j, v) in x.row(i).iter().enumerate() {
            var[j] += (v - means[j]).powi(2);
        }
    }
    let scales = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 1e-12 * (1.0 + s) {
                s
            } else {
                0.0
            }
        })
        .collect();
    Standardization { means, scales }
}

fn standardized_column(x: &Design<'_>, st: &Standardization, j: usize) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| (x.get(i, j) - st.means[j]) / st.scales[j])
        .collect()
}

/// The smallest `lambda` at which the pure-lasso solution is all zeros,
/// computed on standardized columns: `max_j |z_j' (y - mean(y))| / n`.
pub fn lasso_lambda_max(x: &Design<'_>, y: &[f64]) -> Result<f64> {
    check_xy(x, y)?;
    let st = standardize(x);
    let n = x.nrows() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    Ok((0..x.ncols())
        .filter(|&j| st.scales[j] > 0.0)
        .map(|j| {
            standardized_column(x, &st, j)
                .iter()
                .zip(y)
                .map(|(z, yi)| z * (yi - ybar))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest KKT violation of standardized coefficients `b` for the objective
/// `(1/2n)||y - Z b||^2 + lambda*alpha*||b||_1 + lambda*(1-alpha)/2*||b||^2`.
/// Gradients come from explicit residuals.
pub fn kkt_violation(z_cols: &[Vec<f64>], yc: &[f64], b: &[f64], lambda: f64, alpha: f64) -> f64 {
    let n = yc.len() as f64;
    let mut r = yc.to_vec();
    for (col, &bj) in z_cols.iter().zip(b) {
        if bj != 0.0 {
            for (ri, zi) in r.iter_mut().zip(col) {
                *ri -= zi * bj;
            }
        }
    }
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    z_cols
        .iter()
        .zip(b)
        .map(|(col, &bj)| {
            let g = col.iter().zip(&r).map(|(z, ri)| z * ri).sum::<f64>() / n;
            if bj == 0.0 {
                (g.abs() - l1).max(0.0)
            } else {
                (g - l1 * bj.signum() - l2 * bj).abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn fit_lasso(x: &Design<'_>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    fit_elastic_net_inner(x, y, lambda, 1.0, Penalty::Lasso { lambda })
}

/// Elastic net by cyclic coordinate descent on standardized columns;
/// `alpha = 1` is the lasso. Coefficients are returned in original units.
pub fn fit_elastic_net(x: &Design<'_>, y: &[f64], lambda: f64, alpha: f64) -> Result<LinearModel> {
    fit_elastic_net_inner(x, y, lambda, alpha, Penalty::ElasticNet { lambda, alpha })
}

fn fit_elastic_net_inner(x: &Design<'_>, y: &[f64], lambda: f64, alpha: f64, penalty: Penalty) -> Result<LinearModel> {
    check_xy(x, y)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = x.nrows();
    let nf = n as f64;
    let st = standardize(x);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| st.scales[j] > 0.0).collect();
    let z: Vec<Vec<f64>> = active.iter().map(|&j| standardized_column(x, &st, j)).collect();
    let ybar = y.iter().sum::<f64>() / nf;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let m = active.len();

    // covariance updates: gram G = Z'Z/n and c = Z'yc/n
    let mut gram = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let g = z[a].iter().zip(&z[b]).map(|(u, v)| u * v).sum::<f64>() / nf;
            gram[a * m + b] = g;
            gram[b * m + a] = g;
        }
    }
    let c: Vec<f64> = z
        .iter()
        .map(|col| col.iter().zip(&yc).map(|(u, v)| u * v).sum::<f64>() / nf)
        .collect();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    let mut b = vec![0.0; m];
    let mut gb = vec![0.0; m]; // G b
    let mut last_kkt = f64::INFINITY;
    let mut converged = m == 0;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut max_change: f64 = 0.0;
        for j in 0..m {
            let gjj = gram[j * m + j];
            let rho = c[j] - gb[j] + gjj * b[j];
            let new = soft_threshold(rho, l1) / (gjj + l2);
            let delta = new - b[j];
            if delta != 0.0 {
                b[j] = new;
                for k in 0..m {
                    gb[k] += gram[k * m + j] * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < COEF_TOL {
            last_kkt = kkt_violation(&z, &yc, &b, lambda, alpha);
            if last_kkt <= KKT_TOL {
                converged = true;
            } else {
                // refresh the running product against drift and keep going
                for k in 0..m {
                    gb[k] = (0..m).map(|j| gram[k * m + j] * b[j]).sum();
                }
            }
        }
    }
    if !converged {
        if last_kkt.is_infinite() {
            last_kkt = kkt_violation(&z, &yc, &b, lambda, alpha);
        }
        return Err(Error::NonConvergence {
            sweeps: MAX_SWEEPS,
            kkt_violation: last_kkt,
        });
    }
    let mut coefficients = vec![0.0; x.ncols()];
    for (a, &j) in active.iter().enumerate() {
        coefficients[j] = b[a] / st.scales[j];
    }
    let intercept = ybar - coefficients.iter().zip(&st.means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
        penalty,
        feature_means: st.means,
    })
}
