use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_params, grow_tree, Node, Presort, RegressionTree, TreeParams};
use super::{check_xy, Design};
use crate::error::{Error, Result};

/// Boosting stops once the training RMSE improves by less than this for
/// [`EARLY_STOP_ROUNDS`] consecutive stages.
pub const EARLY_STOP_TOL: f64 = 1e-12;
pub const EARLY_STOP_ROUNDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Bagging,
    Boosting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub trees: Vec<RegressionTree>,
    /// Shrinkage applied to every tree (boosting); 1 for bagging.
    pub learning_rate: f64,
    pub base_score: f64,
    pub feature_subsample: f64,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
    pub n_features: usize,
    /// Training RMSE after each boosting stage.
    pub train_rmse: Vec<f64>,
}

impl TreeEnsemble {
    /// Weight of each tree's output in the prediction.
    pub fn tree_weight(&self) -> f64 {
        match self.kind {
            EnsembleKind::Boosting => self.learning_rate,
            EnsembleKind::Bagging => {
                if self.trees.is_empty() {
                    0.0
                } else {
                    1.0 / self.trees.len() as f64
                }
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        match self.kind {
            EnsembleKind::Boosting => self.base_score + self.learning_rate * s,
            EnsembleKind::Bagging => {
                if self.trees.is_empty() {
                    self.base_score
                } else {
                    self.base_score + s / self.trees.len() as f64
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.trees {
            if t.n_features != self.n_features {
                return Err(Error::ModelFormat("tree feature count mismatch".into()));
            }
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn as split candidates at each node.
    pub feature_subsample: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 1000,
            max_depth: None,
            min_samples_leaf: 1,
            feature_subsample: 1.0 / 3.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_estimators: 2000,
            learning_rate: 0.1,
            max_depth: Some(5),
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Random forest: bootstrap rows per tree and sample candidate features
/// per split. Each tree draws from its own RNG stream, so the result does
/// not depend on thread scheduling.
pub fn fit_forest(x: &Design<'_>, y: &[f64], params: &ForestParams) -> Result<TreeEnsemble> {
    check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Parameter("n_trees must be >= 1".into()));
    }
    if !(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0) {
        return Err(Error::Parameter(format!(
            "feature_subsample must lie in (0, 1], got {}",
            params.feature_subsample
        )));
    }
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    check_params(&tp)?;
    let n = x.nrows();
    let p = x.ncols();
    let max_features = ((params.feature_subsample * p as f64).ceil() as usize).clamp(1, p.max(1));
    let presort = Presort::new(x);
    let trees: Vec<RegressionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            if params.bootstrap {
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                let (ps, rows) = presort.resample(&counts);
                let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
                grow_tree(&ps, &ys, tp, max_features, Some(&mut rng))
            } else {
                grow_tree(&presort, y, tp, max_features, Some(&mut rng))
            }
        })
        .collect();
    Ok(TreeEnsemble {
        kind: EnsembleKind::Bagging,
        trees,
        learning_rate: 1.0,
        base_score: 0.0,
        feature_subsample: params.feature_subsample,
        bootstrap: params.bootstrap,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        seed: params.seed,
        n_features: p,
        train_rmse: Vec::new(),
    })
}

fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Squared-loss gradient boosting. Every stage fits a tree to the current
/// residuals over all rows with all features, so the fit is deterministic;
/// the seed is recorded for provenance.
pub fn fit_gbm(x: &Design<'_>, y: &[f64], params: &GbmParams) -> Result<TreeEnsemble> {
    check_xy(x, y)?;
    if params.n_estimators == 0 {
        return Err(Error::Parameter("n_estimators must be >= 1".into()));
    }
    if !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
        return Err(Error::Parameter(format!(
            "learning_rate must be > 0, got {}",
            params.learning_rate
        )));
    }
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
    };
    check_params(&tp)?;
    let n = x.nrows();
    let base = y.iter().sum::<f64>() / n as f64;
    let presort = Presort::new(x);
    let mut residual: Vec<f64> = y.iter().map(|v| v - base).collect();
    let mut trees = Vec::new();
    let mut history = Vec::new();
    let mut prev = rmse(&residual);
    let mut stalled = 0;
    for _ in 0..params.n_estimators {
        let tree = grow_tree::<ChaCha8Rng>(&presort, &residual, tp, x.ncols(), None);
        if matches!(tree.nodes[..], [Node::Leaf { .. }]) {
            // no split found: later stages would see the same residuals
            log::debug!("boosting stopped after {} stages: no further split", trees.len());
            break;
        }
        for (i, r) in residual.iter_mut().enumerate() {
            *r -= params.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
        let cur = rmse(&residual);
        history.push(cur);
        if prev - cur < EARLY_STOP_TOL {
            stalled += 1;
            if stalled >= EARLY_STOP_ROUNDS {
                log::debug!("boosting early-stopped after {} stages", trees.len());
                break;
            }
        } else {
            stalled = 0;
        }
        prev = cur;
    }
    Ok(TreeEnsemble {
        kind: EnsembleKind::Boosting,
        trees,
        learning_rate: params.learning_rate,
        base_score: base,
        feature_subsample: 1.0,
        bootstrap: false,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        seed: params.seed,
        n_features: x.ncols(),
        train_rmse: history,
    })
}
