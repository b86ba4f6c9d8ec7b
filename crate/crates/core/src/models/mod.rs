//! Regression models: linear (OLS, ridge, lasso, elastic net), CART, random
//! forest, gradient boosting, k-nearest neighbours and a seasonal baseline.

mod baseline;
mod ensemble;
mod knn;
mod lasso;
mod linear;
mod tree;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featgen::{FeatureMatrix, SeasonalModel, Split};

pub use baseline::{fit_seasonal_baseline, SeasonalBaseline};
pub use ensemble::{
    fit_forest, fit_gbm, EnsembleKind, ForestParams, GbmParams, TreeEnsemble, EARLY_STOP_ROUNDS, EARLY_STOP_TOL,
};
pub use knn::{fit_knn, predict_knn, KnnModel};
pub use lasso::{
    fit_elastic_net, fit_lasso, kkt_violation, lasso_lambda_max, standardize, Standardization, COEF_TOL, KKT_TOL,
    MAX_SWEEPS,
};
pub use linear::{fit_ols, fit_ridge, LinearModel, Penalty};
pub use tree::{fit_tree, Node, RegressionTree, TreeParams, GAIN_TIE_TOL, MIN_RELATIVE_GAIN};

/// Borrowed row-major design matrix.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    data: &'a [f64],
    nrows: usize,
    ncols: usize,
}

impl<'a> Design<'a> {
    pub fn new(data: &'a [f64], nrows: usize, ncols: usize) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::Shape(format!(
                "{} values for a {nrows}x{ncols} matrix",
                data.len()
            )));
        }
        Ok(Design { data, nrows, ncols })
    }

    pub fn of(m: &'a FeatureMatrix) -> Self {
        Design {
            data: &m.data,
            nrows: m.nrows(),
            ncols: m.ncols(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }
}

pub(crate) fn check_xy(x: &Design<'_>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Fit("no training rows".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::Shape(format!("{} targets for {} rows", y.len(), x.nrows())));
    }
    if x.data().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in training data".into()));
    }
    Ok(())
}

fn default_min_leaf() -> usize {
    1
}
fn default_gbm_estimators() -> usize {
    GbmParams::default().n_estimators
}
fn default_gbm_lr() -> f64 {
    GbmParams::default().learning_rate
}
fn default_gbm_depth() -> Option<usize> {
    GbmParams::default().max_depth
}
fn default_forest_trees() -> usize {
    ForestParams::default().n_trees
}
fn default_subsample() -> f64 {
    ForestParams::default().feature_subsample
}
fn default_true() -> bool {
    true
}
fn default_k() -> usize {
    5
}

/// A model and its hyperparameters, as named in configs and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ols,
    Ridge {
        lambda: f64,
    },
    Lasso {
        lambda: f64,
    },
    ElasticNet {
        lambda: f64,
        alpha: f64,
    },
    Tree {
        #[serde(default)]
        max_depth: Option<usize>,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: usize,
    },
    Forest {
        #[serde(default = "default_forest_trees")]
        n_trees: usize,
        #[serde(default)]
        max_depth: Option<usize>,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: usize,
        #[serde(default = "default_subsample")]
        feature_subsample: f64,
        #[serde(default = "default_true")]
        bootstrap: bool,
    },
    Gbm {
        #[serde(default = "default_gbm_estimators")]
        n_estimators: usize,
        #[serde(default = "default_gbm_lr")]
        learning_rate: f64,
        #[serde(default = "default_gbm_depth")]
        max_depth: Option<usize>,
        #[serde(default = "default_min_leaf")]
        min_samples_leaf: usize,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    SeasonalBaseline,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Ols => "ols",
            ModelSpec::Ridge { .. } => "ridge",
            ModelSpec::Lasso { .. } => "lasso",
            ModelSpec::ElasticNet { .. } => "elastic_net",
            ModelSpec::Tree { .. } => "tree",
            ModelSpec::Forest { .. } => "forest",
            ModelSpec::Gbm { .. } => "gbm",
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::SeasonalBaseline => "seasonal_baseline",
        }
    }

    /// Model family column of the benchmark table.
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Ols | ModelSpec::Ridge { .. } | ModelSpec::Lasso { .. } | ModelSpec::ElasticNet { .. } => {
                "linear"
            }
            ModelSpec::Tree { .. } => "tree",
            ModelSpec::Forest { .. } | ModelSpec::Gbm { .. } => "ensemble",
            ModelSpec::Knn { .. } => "neighbors",
            ModelSpec::SeasonalBaseline => "seasonal",
        }
    }

    pub fn uses_features(&self) -> bool {
        !matches!(self, ModelSpec::SeasonalBaseline)
    }

    /// Every problem with the hyperparameters.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let name = self.name();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(format!("{name}: {msg}"));
            }
        };
        match *self {
            ModelSpec::Ridge { lambda } | ModelSpec::Lasso { lambda } => {
                need(lambda >= 0.0 && lambda.is_finite(), "lambda must be finite and >= 0")
            }
            ModelSpec::ElasticNet { lambda, alpha } => {
                need(lambda >= 0.0 && lambda.is_finite(), "lambda must be finite and >= 0");
                need((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
            }
            ModelSpec::Tree { min_samples_leaf, .. } => need(min_samples_leaf >= 1, "min_samples_leaf must be >= 1"),
            ModelSpec::Forest {
                n_trees,
                min_samples_leaf,
                feature_subsample,
                ..
            } => {
                need(n_trees >= 1, "n_trees must be >= 1");
                need(min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
                need(
                    feature_subsample > 0.0 && feature_subsample <= 1.0,
                    "feature_subsample must lie in (0, 1]",
                );
            }
            ModelSpec::Gbm {
                n_estimators,
                learning_rate,
                min_samples_leaf,
                ..
            } => {
                need(n_estimators >= 1, "n_estimators must be >= 1");
                need(
                    learning_rate > 0.0 && learning_rate.is_finite(),
                    "learning_rate must be > 0",
                );
                need(min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
            }
            ModelSpec::Knn { k } => need(k >= 1, "k must be >= 1"),
            ModelSpec::Ols | ModelSpec::SeasonalBaseline => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Fitted {
    Linear(LinearModel),
    Tree(RegressionTree),
    Ensemble(TreeEnsemble),
    Knn(KnnModel),
    Seasonal(SeasonalBaseline),
}

/// A fitted model with the feature columns it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub fitted: Fitted,
}

/// Fits `spec` on the train-tagged rows of `m`.
pub fn fit_model(spec: &ModelSpec, m: &FeatureMatrix, seasonal: &SeasonalModel, seed: u64) -> Result<Model> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(Error::Parameter(problems.join("; ")));
    }
    let train_rows = m.rows_in(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::Split("no train-tagged rows to fit on".into()));
    }
    let train = m.select_rows(&train_rows);
    let x = Design::of(&train);
    let y = &train.target;
    let fitted = match *spec {
        ModelSpec::Ols => Fitted::Linear(fit_ols(&x, y)?),
        ModelSpec::Ridge { lambda } => Fitted::Linear(fit_ridge(&x, y, lambda)?),
        ModelSpec::Lasso { lambda } => Fitted::Linear(fit_lasso(&x, y, lambda)?),
        ModelSpec::ElasticNet { lambda, alpha } => Fitted::Linear(fit_elastic_net(&x, y, lambda, alpha)?),
        ModelSpec::Tree {
            max_depth,
            min_samples_leaf,
        } => Fitted::Tree(fit_tree(&x, y, max_depth, min_samples_leaf)?),
        ModelSpec::Forest {
            n_trees,
            max_depth,
            min_samples_leaf,
            feature_subsample,
            bootstrap,
        } => Fitted::Ensemble(fit_forest(
            &x,
            y,
            &ForestParams {
                n_trees,
                max_depth,
                min_samples_leaf,
                feature_subsample,
                bootstrap,
                seed,
            },
        )?),
        ModelSpec::Gbm {
            n_estimators,
            learning_rate,
            max_depth,
            min_samples_leaf,
        } => Fitted::Ensemble(fit_gbm(
            &x,
            y,
            &GbmParams {
                n_estimators,
                learning_rate,
                max_depth,
                min_samples_leaf,
                seed,
            },
        )?),
        ModelSpec::Knn { k } => Fitted::Knn(fit_knn(&x, y, k)?),
        ModelSpec::SeasonalBaseline => Fitted::Seasonal(fit_seasonal_baseline(seasonal, m)?),
    };
    Ok(Model {
        spec: spec.clone(),
        seed,
        feature_names: if spec.uses_features() {
            m.column_names()
        } else {
            Vec::new()
        },
        fitted,
    })
}

impl Model {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn base_score(&self) -> Option<f64> {
        match &self.fitted {
            Fitted::Ensemble(e) => Some(e.base_score),
            _ => None,
        }
    }

    /// Prediction for one feature row (not available for the seasonal baseline).
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "row has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(match &self.fitted {
            Fitted::Linear(l) => l.predict_row(x),
            Fitted::Tree(t) => t.predict_row(x),
            Fitted::Ensemble(e) => e.predict_row(x),
            Fitted::Knn(k) => k.predict_row(x),
            Fitted::Seasonal(_) => {
                return Err(Error::Shape(
                    "the seasonal baseline predicts from row keys, not features".into(),
                ))
            }
        })
    }

    pub fn predict_design(&self, x: &Design<'_>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, model expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect()
    }

    /// Predictions for every row of `m`; feature columns must match training.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if let Fitted::Seasonal(b) = &self.fitted {
            return Ok(m.keys.par_iter().map(|k| b.predict_key(k)).collect());
        }
        if m.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, model expects {}",
                m.ncols(),
                self.n_features()
            )));
        }
        for (c, n) in m.columns.iter().zip(&self.feature_names) {
            if &c.name != n {
                return Err(Error::Shape(format!(
                    "column `{}` where the model expects `{n}`",
                    c.name
                )));
            }
        }
        self.predict_design(&Design::of(m))
    }
}

/// Generic entry point matching [`Model::predict`].
pub fn predict(model: &Model, m: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(m)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    kind: String,
    hyperparameters: ModelSpec,
    seed: u64,
    base_score: Option<f64>,
    feature_names: Vec<String>,
    model: Fitted,
}

pub fn model_to_json(model: &Model) -> Result<String> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        kind: model.spec.name().to_string(),
        hyperparameters: model.spec.clone(),
        seed: model.seed,
        base_score: model.base_score(),
        feature_names: model.feature_names.clone(),
        model: model.fitted.clone(),
    };
    serde_json::to_string(&file).map_err(|e| Error::ModelFormat(format!("cannot serialize model: {e}")))
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    match v.get("format_version").and_then(|f| f.as_u64()) {
        Some(x) if x == MODEL_FORMAT_VERSION as u64 => {}
        Some(x) => {
            return Err(Error::ModelFormat(format!(
                "format version {x}, expected {MODEL_FORMAT_VERSION}"
            )))
        }
        None => return Err(Error::ModelFormat("missing format_version".into())),
    }
    let f: ModelFile = serde_json::from_value(v).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if f.kind != f.hyperparameters.name() {
        return Err(Error::ModelFormat(format!(
            "kind `{}` does not match hyperparameters of `{}`",
            f.kind,
            f.hyperparameters.name()
        )));
    }
    let p = f.feature_names.len();
    let consistent = match (&f.hyperparameters, &f.model) {
        (
            ModelSpec::Ols | ModelSpec::Ridge { .. } | ModelSpec::Lasso { .. } | ModelSpec::ElasticNet { .. },
            Fitted::Linear(l),
        ) => l.coefficients.len() == p && l.feature_means.len() == p,
        (ModelSpec::Tree { .. }, Fitted::Tree(t)) => {
            t.validate()?;
            t.n_features == p
        }
        (ModelSpec::Forest { .. } | ModelSpec::Gbm { .. }, Fitted::Ensemble(e)) => {
            e.validate()?;
            e.n_features == p && f.base_score == Some(e.base_score)
        }
        (ModelSpec::Knn { .. }, Fitted::Knn(k)) => {
            k.n_features == p && k.x.len() == k.y.len() * p && k.k >= 1 && k.k <= k.y.len()
        }
        (ModelSpec::SeasonalBaseline, Fitted::Seasonal(_)) => p == 0,
        _ => false,
    };
    if !consistent {
        return Err(Error::ModelFormat(format!(
            "`{}` model body is inconsistent with its header",
            f.kind
        )));
    }
    Ok(Model {
        spec: f.hyperparameters,
        seed: f.seed,
        feature_names: f.feature_names,
        fitted: f.model,
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    crate::ingest::write_bytes(path, model_to_json(model)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featgen::{fit_seasonal, Column, FeatureGroup, RowKey};
    use crate::ingest::HolidayCalendar;
    use crate::time::{TimeBucket, TimeScale, SECONDS_PER_DAY};

    const T0: i64 = 1_640_995_200;

    fn matrix() -> FeatureMatrix {
        let n = 40;
        let mut data = Vec::new();
        let mut target = Vec::new();
        let mut keys = Vec::new();
        let mut split = Vec::new();
        for i in 0..n {
            let a = (i % 7) as f64 / 7.0;
            let b = ((i * 3) % 5) as f64 / 5.0;
            data.extend([a, b]);
            target.push(10.0 * a + 3.0 * b + (i % 2) as f64);
            keys.push(RowKey {
                origin: if i % 2 == 0 { "A".into() } else { "B".into() },
                dest: "A".into(),
                bucket_start: T0 + (i / 2) as i64 * SECONDS_PER_DAY,
            });
            split.push(Some(if i < 30 { Split::Train } else { Split::Test }));
        }
        FeatureMatrix {
            level: "q".into(),
            scale: TimeScale::Daily,
            columns: vec![
                Column {
                    name: "a".into(),
                    group: FeatureGroup::Temporal,
                },
                Column {
                    name: "b".into(),
                    group: FeatureGroup::Network,
                },
            ],
            keys,
            data,
            target,
            split,
        }
    }

    fn seasonal() -> SeasonalModel {
        let h: Vec<(TimeBucket, f64)> = (0..15)
            .map(|k| (TimeBucket::containing(TimeScale::Daily, T0 + k * SECONDS_PER_DAY), 10.0))
            .collect();
        fit_seasonal(&h, &HolidayCalendar::default(), T0 + 15 * SECONDS_PER_DAY).unwrap()
    }

    fn all_specs() -> Vec<ModelSpec> {
        vec![
            ModelSpec::Ols,
            ModelSpec::Ridge { lambda: 0.5 },
            ModelSpec::Lasso { lambda: 0.01 },
            ModelSpec::ElasticNet {
                lambda: 0.01,
                alpha: 0.5,
            },
            ModelSpec::Tree {
                max_depth: Some(3),
                min_samples_leaf: 1,
            },
            ModelSpec::Forest {
                n_trees: 5,
                max_depth: Some(3),
                min_samples_leaf: 1,
                feature_subsample: 0.5,
                bootstrap: true,
            },
            ModelSpec::Gbm {
                n_estimators: 20,
                learning_rate: 0.1,
                max_depth: Some(2),
                min_samples_leaf: 1,
            },
            ModelSpec::Knn { k: 3 },
            ModelSpec::SeasonalBaseline,
        ]
    }

    #[test]
    fn every_model_round_trips_bit_exactly() {
        let m = matrix();
        let s = seasonal();
        for spec in all_specs() {
            let model = fit_model(&spec, &m, &s, 42).unwrap();
            let p1 = model.predict(&m).unwrap();
            assert!(p1.iter().all(|v| v.is_finite()), "{}", spec.name());
            let back = model_from_json(&model_to_json(&model).unwrap()).unwrap();
            assert_eq!(back, model);
            let p2 = back.predict(&m).unwrap();
            assert_eq!(
                p1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                p2.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                "{}",
                spec.name()
            );
        }
    }

    #[test]
    fn baseline_shares_sum_to_one() {
        let m = matrix();
        let model = fit_model(&ModelSpec::SeasonalBaseline, &m, &seasonal(), 0).unwrap();
        let Fitted::Seasonal(b) = &model.fitted else { panic!() };
        let total: f64 = b.shares.values().flat_map(|x| x.values()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn format_errors() {
        let m = matrix();
        let model = fit_model(&all_specs()[6], &m, &seasonal(), 1).unwrap();
        let json = model_to_json(&model).unwrap();
        assert!(matches!(
            model_from_json(&json[..json.len() / 2]),
            Err(Error::ModelFormat(_))
        ));
        let bumped = json.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(model_from_json(&bumped), Err(Error::ModelFormat(_))));
        let wrong_kind = json.replacen("\"kind\":\"gbm\"", "\"kind\":\"forest\"", 1);
        assert!(model_from_json(&wrong_kind).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let m = matrix();
        let model = fit_model(&ModelSpec::Ols, &m, &seasonal(), 0).unwrap();
        let narrow = m.select_columns(&[0]);
        assert!(matches!(model.predict(&narrow), Err(Error::Shape(_))));
        assert!(model.predict_row(&[1.0]).is_err());
    }

    #[test]
    fn spec_from_toml_with_defaults() {
        #[derive(Deserialize)]
        struct W {
            models: Vec<ModelSpec>,
        }
        let w: W = toml::from_str(
            r#"
            [[models]]
            kind = "gbm"
            n_estimators = 50
            [[models]]
            kind = "elastic_net"
            lambda = 0.1
            alpha = 0.5
            [[models]]
            kind = "seasonal_baseline"
            "#,
        )
        .unwrap();
        assert_eq!(
            w.models[0],
            ModelSpec::Gbm {
                n_estimators: 50,
                learning_rate: 0.1,
                max_depth: Some(5),
                min_samples_leaf: 1
            }
        );
        assert_eq!(w.models[2], ModelSpec::SeasonalBaseline);
        assert!(ModelSpec::Knn { k: 0 }.problems().len() == 1);
    }
}
