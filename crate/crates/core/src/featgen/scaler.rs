use serde::{Deserialize, Serialize};

use super::matrix::{FeatureMatrix, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Train mean used to impute missing values.
    pub mean: f64,
}

/// Per-column imputation and min-max parameters learned on train rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub columns: Vec<ColumnScaling>,
}

pub fn fit_scaler(m: &FeatureMatrix) -> Result<ScalerState> {
    let train = m.rows_in(Split::Train);
    if train.is_empty() {
        return Err(Error::Split("scaler needs train-tagged rows".into()));
    }
    let columns = (0..m.ncols())
        .map(|j| {
            let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
            for &i in &train {
                let v = m.get(i, j);
                if v.is_nan() {
                    continue;
                }
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v;
                n += 1;
            }
            if n == 0 {
                // never observed in training: impute and scale to zero
                (lo, hi, sum) = (0.0, 0.0, 0.0);
                n = 1;
            }
            ColumnScaling {
                name: m.columns[j].name.clone(),
                min: lo,
                max: hi,
                mean: sum / n as f64,
            }
        })
        .collect();
    Ok(ScalerState { columns })
}

fn check(state: &ScalerState, m: &FeatureMatrix) -> Result<()> {
    if state.columns.len() != m.ncols() {
        return Err(Error::Shape(format!(
            "scaler has {} columns, matrix has {}",
            state.columns.len(),
            m.ncols()
        )));
    }
    for (c, col) in state.columns.iter().zip(&m.columns) {
        if c.name != col.name {
            return Err(Error::MissingColumn(c.name.clone()));
        }
    }
    Ok(())
}

/// Imputes missing values with the train mean, then maps each column to
/// `(x - min) / (max - min)`. Constant train columns map to 0. Values outside
/// the train range are not clipped.
pub fn apply_scaler(state: &ScalerState, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    check(state, m)?;
    let p = m.ncols();
    let mut out = m.clone();
    for (k, v) in out.data.iter_mut().enumerate() {
        let c = &state.columns[k % p];
        if v.is_nan() {
            *v = c.mean;
        }
        let range = c.max - c.min;
        *v = if range > 0.0 { (*v - c.min) / range } else { 0.0 };
    }
    Ok(out)
}

/// Inverse of the min-max map (imputed values are not restored as missing).
pub fn invert_scaler(state: &ScalerState, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    check(state, m)?;
    let p = m.ncols();
    let mut out = m.clone();
    for (k, v) in out.data.iter_mut().enumerate() {
        let c = &state.columns[k % p];
        let range = c.max - c.min;
        *v = if range > 0.0 { *v * range + c.min } else { c.min };
    }
    Ok(out)
}
