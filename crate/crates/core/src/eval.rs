//! Temporal cut-off evaluation: splitting, error metrics, the model
//! comparison table and the feature-group ablation.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::featgen::{FeatureGroup, FeatureMatrix, SeasonalModel, Split};
use crate::ingest::write_bytes;
use crate::models::{fit_model, Model, ModelSpec};
use crate::time::{TimeBucket, TimeScale};

/// Column names of the benchmark and ablation tables.
pub const REPORT_COLUMNS: [&str; 9] = [
    "timeframe",
    "geography",
    "featurestypes",
    "regressortype",
    "regressor",
    "mae",
    "mape",
    "mse",
    "rmse",
];

/// A single train/test boundary, aligned to a bucket start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub cutoff: i64,
}

impl CutoffSpec {
    /// Aligns `ts` down to the start of its bucket at `scale`.
    pub fn aligned(ts: i64, scale: TimeScale) -> Self {
        CutoffSpec {
            cutoff: TimeBucket::containing(scale, ts).start,
        }
    }
}

/// Tags every row of `m` as train (bucket before the cutoff) or test and
/// returns the two row counts.
pub fn split(m: &mut FeatureMatrix, c: &CutoffSpec) -> Result<(usize, usize)> {
    let n_train = m.keys.iter().filter(|k| k.bucket_start < c.cutoff).count();
    let n_test = m.nrows() - n_train;
    let at = crate::time::format_timestamp(c.cutoff);
    if n_train == 0 {
        return Err(Error::Split(format!(
            "train side is empty: no bucket starts before {at}"
        )));
    }
    if n_test == 0 {
        return Err(Error::Split(format!(
            "test side is empty: no bucket starts at or after {at}"
        )));
    }
    for (k, s) in m.keys.iter().zip(m.split.iter_mut()) {
        *s = Some(if k.bucket_start < c.cutoff {
            Split::Train
        } else {
            Split::Test
        });
    }
    Ok((n_train, n_test))
}

fn null_if_nan<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Error metrics on one prediction vector. `mape` is in percent and is NaN
/// when every target is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    #[serde(serialize_with = "null_if_nan", deserialize_with = "nan_if_null")]
    pub mape: f64,
    pub mse: f64,
    pub rmse: f64,
    pub n_rows: usize,
    pub n_mape_excluded: usize,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} targets but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Shape("metrics need at least one row".into()));
    }
    let n = y_true.len() as f64;
    let (mut abs, mut sq, mut pct) = (0.0, 0.0, 0.0);
    let mut excluded = 0;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        if t == 0.0 {
            excluded += 1;
        } else {
            pct += (e / t).abs();
        }
    }
    let kept = y_true.len() - excluded;
    let mse = sq / n;
    Ok(MetricsReport {
        mae: abs / n,
        mape: if kept == 0 { f64::NAN } else { 100.0 * pct / kept as f64 },
        mse,
        rmse: mse.sqrt(),
        n_rows: y_true.len(),
        n_mape_excluded: excluded,
    })
}

/// Metrics of `model` on the test-tagged rows of `m`.
pub fn evaluate_model(model: &Model, m: &FeatureMatrix) -> Result<MetricsReport> {
    let rows = m.rows_in(Split::Test);
    if rows.is_empty() {
        return Err(Error::Split("no test-tagged rows to evaluate on".into()));
    }
    let test = m.select_rows(&rows);
    let pred = model.predict(&test)?;
    metrics(&test.target, &pred)
}

/// Regressor type label of the report tables.
pub fn regressor_type(spec: &ModelSpec) -> &'static str {
    if spec.uses_features() {
        "classical ML"
    } else {
        "time series"
    }
}

/// One line of a benchmark or ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub timeframe: String,
    pub geography: String,
    pub featurestypes: String,
    pub regressortype: String,
    pub regressor: String,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn new(m: &FeatureMatrix, features: &str, spec: &ModelSpec, outcome: Result<MetricsReport>) -> Self {
        let (metrics, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        ReportRow {
            timeframe: m.scale.as_str().to_string(),
            geography: m.level.clone(),
            featurestypes: features.to_string(),
            regressortype: regressor_type(spec).to_string(),
            regressor: spec.name().to_string(),
            metrics,
            error,
        }
    }

    fn values(&self) -> [f64; 4] {
        match &self.metrics {
            Some(r) => [r.mae, r.mape, r.mse, r.rmse],
            None => [f64::NAN; 4],
        }
    }
}

/// A finished table plus the hash of the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct Best<'a> {
    timeframe: &'a str,
    geography: &'a str,
    regressor: &'a str,
    mae: f64,
    rmse: f64,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash: {}\n{}\n", self.config_hash, REPORT_COLUMNS.join(","));
        for r in &self.rows {
            let v = r.values();
            let cells = [
                r.timeframe.as_str(),
                &r.geography,
                &r.featurestypes,
                &r.regressortype,
                &r.regressor,
            ];
            let quoted: Vec<String> = cells.iter().map(|c| csv_cell(c)).collect();
            let _ = writeln!(out, "{},{},{},{},{}", quoted.join(","), v[0], v[1], v[2], v[3]);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let best: Vec<Best<'_>> = best_rows(&self.rows)
            .into_iter()
            .map(|i| {
                let r = &self.rows[i];
                let m = r.metrics.as_ref().expect("best rows have metrics");
                Best {
                    timeframe: &r.timeframe,
                    geography: &r.geography,
                    regressor: &r.regressor,
                    mae: m.mae,
                    rmse: m.rmse,
                }
            })
            .collect();
        let v = serde_json::json!({
            "kind": self.kind,
            "config_hash": self.config_hash,
            "columns": REPORT_COLUMNS,
            "rows": self.rows,
            "best": best,
        });
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }

    /// Fixed-width rendering for the terminal.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<9} {:<12} {:<22} {:<13} {:<18} {:>12} {:>10} {:>14} {:>12}\n",
            "timeframe", "geography", "featurestypes", "regressortype", "regressor", "mae", "mape", "mse", "rmse"
        );
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<9} {:<12} {:<22} {:<13} {:<18}",
                r.timeframe, r.geography, r.featurestypes, r.regressortype, r.regressor
            );
            match &r.metrics {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        " {:>12.4} {:>10.4} {:>14.4} {:>12.4}",
                        m.mae, m.mape, m.mse, m.rmse
                    );
                }
                None => {
                    let _ = writeln!(out, " error: {}", r.error.as_deref().unwrap_or("unknown"));
                }
            }
        }
        out
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        write_bytes(csv_path, self.to_csv().as_bytes())?;
        write_bytes(json_path, self.to_json().as_bytes())
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn better(a: &MetricsReport, b: &MetricsReport) -> bool {
    a.mae < b.mae || (a.mae == b.mae && a.rmse < b.rmse)
}

/// Index of the best successful row for each (timeframe, geography), lowest
/// MAE first and then lowest RMSE; earlier rows win exact ties.
pub fn best_rows(rows: &[ReportRow]) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let Some(m) = &r.metrics else { continue };
        if !m.mae.is_finite() {
            continue;
        }
        let slot = best
            .iter()
            .position(|&j| rows[j].timeframe == r.timeframe && rows[j].geography == r.geography);
        match slot {
            None => best.push(i),
            Some(s) => {
                if better(m, rows[best[s]].metrics.as_ref().unwrap()) {
                    best[s] = i;
                }
            }
        }
    }
    best
}

/// One (scale, level) combination ready for benchmarking: split tags set
/// and features scaled.
#[derive(Clone, Copy)]
pub struct BenchmarkCell<'a> {
    pub matrix: &'a FeatureMatrix,
    pub seasonal: &'a SeasonalModel,
}

/// Fits every model of `grid` on every cell and scores it on the test rows.
/// Rows come out cell by cell in grid order; failed fits become error rows.
pub fn run_benchmark(cells: &[BenchmarkCell<'_>], grid: &[ModelSpec], seed: u64) -> Vec<ReportRow> {
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.len()).map(move |g| (c, g)))
        .collect();
    jobs.par_iter()
        .map(|&(c, g)| {
            let cell = cells[c];
            let outcome =
                fit_model(&grid[g], cell.matrix, cell.seasonal, seed).and_then(|m| evaluate_model(&m, cell.matrix));
            ReportRow::new(cell.matrix, "all", &grid[g], outcome)
        })
        .collect()
}

/// A non-empty set of feature groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub groups: Vec<FeatureGroup>,
}

impl AblationConfig {
    pub fn new(mut groups: Vec<FeatureGroup>) -> Result<Self> {
        groups.sort();
        groups.dedup();
        if groups.is_empty() {
            return Err(Error::Config(
                "an ablation subset needs at least one feature group".into(),
            ));
        }
        Ok(AblationConfig { groups })
    }

    /// The seven subsets in report order.
    pub fn all_subsets() -> Vec<AblationConfig> {
        use FeatureGroup::*;
        [
            vec![Spatial, Temporal, Network],
            vec![Spatial],
            vec![Temporal],
            vec![Network],
            vec![Spatial, Temporal],
            vec![Network, Temporal],
            vec![Spatial, Network],
        ]
        .into_iter()
        .map(|g| AblationConfig { groups: g })
        .collect()
    }

    /// Table label: `all`, a group name, or two names joined by `and`.
    pub fn label(&self) -> String {
        if self.groups.len() == FeatureGroup::ALL.len() {
            return "all".into();
        }
        // network leads temporal and spatial leads network, as in the paper's rows
        let mut g = self.groups.clone();
        g.sort_by_key(|x| match x {
            FeatureGroup::Spatial => 0,
            FeatureGroup::Network => 1,
            FeatureGroup::Temporal => 2,
        });
        g.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(" and ")
    }
}

/// Records which columns each ablation fit was given.
#[derive(Debug, Default)]
pub struct ColumnAudit {
    reads: Mutex<Vec<(AblationConfig, Vec<String>)>>,
}

impl ColumnAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, subset: &AblationConfig, columns: Vec<String>) {
        self.reads.lock().unwrap().push((subset.clone(), columns));
    }

    pub fn reads(&self) -> Vec<(AblationConfig, Vec<String>)> {
        self.reads.lock().unwrap().clone()
    }

    /// Columns read by a subset that belong to none of its groups.
    pub fn violations(&self, m: &FeatureMatrix) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (subset, cols) in self.reads() {
            for c in cols {
                let ok = m
                    .columns
                    .iter()
                    .find(|col| col.name == c)
                    .is_some_and(|col| subset.groups.contains(&col.group));
                if !ok {
                    out.push((subset.label(), c));
                }
            }
        }
        out
    }
}

/// Scores `spec` on each of the seven feature-group subsets of `m`.
pub fn run_ablation(
    m: &FeatureMatrix,
    seasonal: &SeasonalModel,
    spec: &ModelSpec,
    seed: u64,
    audit: Option<&ColumnAudit>,
) -> Result<Vec<ReportRow>> {
    for g in FeatureGroup::ALL {
        if m.group_columns(&[g]).is_empty() {
            return Err(Error::Config(format!(
                "feature group `{}` has no columns in the {} / {} matrix",
                g.as_str(),
                m.scale,
                m.level
            )));
        }
    }
    let subsets = AblationConfig::all_subsets();
    Ok(subsets
        .par_iter()
        .map(|s| {
            let sub = m.select_columns(&m.group_columns(&s.groups));
            let outcome = fit_model(spec, &sub, seasonal, seed).and_then(|model| {
                if let Some(a) = audit {
                    a.record(s, model.feature_names.clone());
                }
                evaluate_model(&model, &sub)
            });
            ReportRow::new(m, &s.label(), spec, outcome)
        })
        .collect())
}
