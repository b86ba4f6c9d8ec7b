//! Dense least-squares helpers shared by the seasonal model and the linear
//! regressors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column means of `x`.
pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Solves `min ||y - b0 - X b||^2 + lambda ||b||^2` with the intercept left
/// unpenalized, by centering. `lambda = 0` is ordinary least squares; a
/// rank-deficient system then falls back to the minimum-norm SVD solution.
pub(crate) fn ridge_centered(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<(f64, DVector<f64>)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Fit("no rows to fit".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{} targets for {} rows", y.len(), n)));
    }
    let means = column_means(x);
    let y_mean = y.sum() / n as f64;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let yc = y.add_scalar(-y_mean);
    let beta = solve_normal(&xc, &yc, lambda)?;
    let intercept = y_mean - means.dot(&beta);
    Ok((intercept, beta))
}

fn solve_normal(xc: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let p = xc.ncols();
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut gram = xc.tr_mul(xc);
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let rhs = xc.tr_mul(yc);
    if let Some(ch) = gram.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
        // squared pivot ratio approximates the reciprocal condition number
        let well_conditioned = hi > 0.0 && (lo / hi).powi(2) > 1e-13;
        let beta = ch.solve(&rhs);
        if well_conditioned && beta.iter().all(|b| b.is_finite()) {
            return Ok(beta);
        }
    }
    let svd = xc.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (xc.nrows().max(p) as f64) * f64::EPSILON;
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let mut beta = DVector::zeros(p);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            continue;
        }
        // ridge-shrunk inverse of each singular value
        let coef = u.column(k).dot(yc) * s / (s * s + lambda);
        beta += vt.row(k).transpose() * coef;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical {
            message: "least-squares solve produced non-finite coefficients".into(),
            condition: if tol > 0.0 { smax / tol } else { f64::INFINITY },
        });
    }
    Ok(beta)
}
