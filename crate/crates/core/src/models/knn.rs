use serde::{Deserialize, Serialize};

use super::{check_xy, Design};
use crate::error::{Error, Result};

/// Brute-force k-nearest-neighbour regressor on Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_features: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn fit_knn(x: &Design<'_>, y: &[f64], k: usize) -> Result<KnnModel> {
    check_xy(x, y)?;
    if k == 0 || k > x.nrows() {
        return Err(Error::Parameter(format!("k = {k} must lie in 1..={}", x.nrows())));
    }
    Ok(KnnModel {
        k,
        n_features: x.ncols(),
        x: x.data().to_vec(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances keep the lower row index.
    pub fn neighbors(&self, q: &[f64]) -> Vec<usize> {
        let p = self.n_features;
        let mut d: Vec<(f64, usize)> = (0..self.n_rows())
            .map(|i| {
                let row = &self.x[i * p..(i + 1) * p];
                (row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        nb.iter().map(|&i| self.y[i]).sum::<f64>() / nb.len() as f64
    }
}

pub fn predict_knn(model: &KnnModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features {
        return Err(Error::Shape(format!(
            "query has {} features, model expects {}",
            x.len(),
            model.n_features
        )));
    }
    Ok(model.predict_row(x))
}
