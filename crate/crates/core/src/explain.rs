//! Exact path-dependent TreeSHAP for tree models, linear attributions, and
//! mean-|φ| importance reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featgen::{FeatureGroup, FeatureMatrix};
use crate::ingest::write_bytes;
use crate::models::{Design, Fitted, Model, Node, RegressionTree, TreeEnsemble};

/// Default cap on the number of rows explained for an importance report.
pub const DEFAULT_SHAP_SAMPLE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapVector {
    pub phi: Vec<f64>,
    pub base_value: f64,
}

impl ShapVector {
    /// `base_value + Σ φ`.
    pub fn total(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>()
    }
}

fn check_covers(tree: &RegressionTree) -> Result<()> {
    for (i, n) in tree.nodes.iter().enumerate() {
        let c = n.cover();
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::ModelFormat(format!("node {i} has no usable cover ({c})")));
        }
    }
    Ok(())
}

/// Cover-weighted mean of the leaf values.
pub fn expected_value(tree: &RegressionTree) -> Result<f64> {
    check_covers(tree)?;
    Ok(expected_from(tree, 0))
}

fn expected_from(tree: &RegressionTree, i: usize) -> f64 {
    match tree.nodes[i] {
        Node::Leaf { value, .. } => value,
        Node::Split { left, right, cover, .. } => {
            let (cl, cr) = (tree.nodes[left].cover(), tree.nodes[right].cover());
            (cl * expected_from(tree, left) + cr * expected_from(tree, right)) / cover
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let d = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / d;
    }
}

fn unwind(path: &mut Vec<PathElem>, idx: usize) {
    let ud = path.len() - 1;
    let (one, zero) = (path[idx].one, path[idx].zero);
    let d = (ud + 1) as f64;
    let mut next = path[ud].weight;
    for i in (0..ud).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * d / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (ud - i) as f64 / d;
        } else {
            path[i].weight = path[i].weight * d / (zero * (ud - i) as f64);
        }
    }
    for i in idx..ud {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElem], idx: usize) -> f64 {
    let ud = path.len() - 1;
    let (one, zero) = (path[idx].one, path[idx].zero);
    let d = (ud + 1) as f64;
    let mut next = path[ud].weight;
    let mut total = 0.0;
    for i in (0..ud).rev() {
        if one != 0.0 {
            let tmp = next * d / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (ud - i) as f64 / d;
        } else {
            total += path[i].weight / zero * d / (ud - i) as f64;
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &RegressionTree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElem>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero, one, feature);
    match tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature.expect("non-root path element")] += w * (e.one - e.zero) * value;
            }
        }
        Node::Split {
            feature: f,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[f] < threshold { (left, right) } else { (right, left) };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            let hz = iz * tree.nodes[hot].cover() / cover;
            let cz = iz * tree.nodes[cold].cover() / cover;
            recurse(tree, x, phi, hot, path.clone(), hz, io, Some(f));
            recurse(tree, x, phi, cold, path, cz, 0.0, Some(f));
        }
    }
}

/// Path-dependent SHAP values of one tree; `base_value` is the tree's
/// cover-weighted expected output.
pub fn tree_shap_tree(tree: &RegressionTree, x: &[f64]) -> Result<ShapVector> {
    if x.len() != tree.n_features {
        return Err(Error::Shape(format!(
            "row has {} features, tree expects {}",
            x.len(),
            tree.n_features
        )));
    }
    let base_value = expected_value(tree)?;
    let mut phi = vec![0.0; tree.n_features];
    recurse(tree, x, &mut phi, 0, Vec::with_capacity(16), 1.0, 1.0, None);
    Ok(ShapVector { phi, base_value })
}

/// SHAP values of an ensemble: per-tree values scaled by the tree weight.
pub fn tree_shap(ensemble: &TreeEnsemble, x: &[f64]) -> Result<ShapVector> {
    if x.len() != ensemble.n_features {
        return Err(Error::Shape(format!(
            "row has {} features, ensemble expects {}",
            x.len(),
            ensemble.n_features
        )));
    }
    let w = ensemble.tree_weight();
    let mut out = ShapVector {
        phi: vec![0.0; ensemble.n_features],
        base_value: ensemble.base_score,
    };
    for t in &ensemble.trees {
        let s = tree_shap_tree(t, x)?;
        out.base_value += w * s.base_value;
        for (a, b) in out.phi.iter_mut().zip(&s.phi) {
            *a += w * b;
        }
    }
    Ok(out)
}

/// Attributions for any model that supports them: TreeSHAP for trees and
/// ensembles, `β_j (x_j − mean_j)` for linear models.
pub fn explain_row(model: &Model, x: &[f64]) -> Result<ShapVector> {
    if x.len() != model.n_features() {
        return Err(Error::Shape(format!(
            "row has {} features, model expects {}",
            x.len(),
            model.n_features()
        )));
    }
    match &model.fitted {
        Fitted::Ensemble(e) => tree_shap(e, x),
        Fitted::Tree(t) => tree_shap_tree(t, x),
        Fitted::Linear(l) => {
            let base_value = l.intercept
                + l.coefficients
                    .iter()
                    .zip(&l.feature_means)
                    .map(|(b, m)| b * m)
                    .sum::<f64>();
            Ok(ShapVector {
                phi: l.attributions(x),
                base_value,
            })
        }
        Fitted::Knn(_) | Fitted::Seasonal(_) => Err(Error::Domain(format!(
            "no exact attribution for `{}` models",
            model.spec.name()
        ))),
    }
}

/// Attributions for every row of `x`, in row order.
pub fn explain_rows(model: &Model, x: &Design<'_>) -> Result<Vec<ShapVector>> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| explain_row(model, x.row(i)))
        .collect()
}

/// Seeded sample of `min(size, n)` distinct row indices, ascending.
pub fn sample_rows(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub group: FeatureGroup,
    pub mean_abs_shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub base_value_mean: f64,
    pub n_rows: usize,
    pub features: Vec<FeatureImportance>,
    pub groups: BTreeMap<FeatureGroup, f64>,
    /// Feature names by decreasing mean |φ|; equal values keep column order.
    pub top_k: Vec<String>,
}

/// Mean |φ| per feature over the given attributions.
pub fn importance_from(
    shap: &[ShapVector],
    names: &[String],
    groups: &[FeatureGroup],
    k: usize,
) -> Result<ImportanceReport> {
    if shap.is_empty() {
        return Err(Error::Domain("importance needs at least one explained row".into()));
    }
    if names.len() != groups.len() || shap.iter().any(|s| s.phi.len() != names.len()) {
        return Err(Error::Shape(
            "feature names, groups and attributions disagree in length".into(),
        ));
    }
    let n = shap.len() as f64;
    let mut mean_abs = vec![0.0; names.len()];
    for s in shap {
        for (m, p) in mean_abs.iter_mut().zip(&s.phi) {
            *m += p.abs();
        }
    }
    for m in &mut mean_abs {
        *m /= n;
    }
    let mut by_group: BTreeMap<FeatureGroup, f64> = FeatureGroup::ALL.iter().map(|&g| (g, 0.0)).collect();
    for (g, m) in groups.iter().zip(&mean_abs) {
        *by_group.get_mut(g).unwrap() += m;
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    Ok(ImportanceReport {
        base_value_mean: shap.iter().map(|s| s.base_value).sum::<f64>() / n,
        n_rows: shap.len(),
        features: (0..names.len())
            .map(|j| FeatureImportance {
                name: names[j].clone(),
                group: groups[j],
                mean_abs_shap: mean_abs[j],
            })
            .collect(),
        groups: by_group,
        top_k: order.into_iter().take(k).map(|j| names[j].clone()).collect(),
    })
}

/// Importance of `model` over the listed rows of `m`.
pub fn importance(model: &Model, m: &FeatureMatrix, rows: &[usize], k: usize) -> Result<ImportanceReport> {
    if rows.is_empty() {
        return Err(Error::Domain("importance needs a non-empty sample".into()));
    }
    let sample = m.select_rows(rows);
    if sample.column_names() != model.feature_names {
        return Err(Error::Shape("matrix columns differ from the model's features".into()));
    }
    let shap = explain_rows(model, &Design::of(&sample))?;
    let groups: Vec<FeatureGroup> = sample.columns.iter().map(|c| c.group).collect();
    importance_from(&shap, &model.feature_names, &groups, k)
}

impl ImportanceReport {
    pub fn to_json(&self, config_hash: &str) -> String {
        let groups: BTreeMap<&str, f64> = self.groups.iter().map(|(g, v)| (g.as_str(), *v)).collect();
        let v = serde_json::json!({
            "config_hash": config_hash,
            "base_value_mean": self.base_value_mean,
            "n_rows": self.n_rows,
            "features": self.features,
            "groups": groups,
            "top_k": self.top_k,
        });
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }

    /// `rank,feature,group,mean_abs_shap,share` for the top-k features.
    pub fn top_k_csv(&self, config_hash: &str) -> String {
        let total: f64 = self.features.iter().map(|f| f.mean_abs_shap).sum();
        let mut out = format!("# config_hash: {config_hash}\nrank,feature,group,mean_abs_shap,share\n");
        for (r, name) in self.top_k.iter().enumerate() {
            let f = self
                .features
                .iter()
                .find(|f| &f.name == name)
                .expect("top-k names are features");
            let share = if total > 0.0 { f.mean_abs_shap / total } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r + 1,
                f.name,
                f.group.as_str(),
                f.mean_abs_shap,
                share
            );
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path, config_hash: &str) -> Result<()> {
        write_bytes(json_path, self.to_json(config_hash).as_bytes())?;
        write_bytes(csv_path, self.top_k_csv(config_hash).as_bytes())
    }
}

/// Per-row attributions as CSV: the row key, every φ and the base value.
pub fn shap_rows_csv(m: &FeatureMatrix, rows: &[usize], shap: &[ShapVector], config_hash: &str) -> String {
    let mut out = format!("# config_hash: {config_hash}\norigin,dest,bucket_start");
    for c in &m.columns {
        let _ = write!(out, ",{}", c.name);
    }
    out.push_str(",base_value\n");
    for (&i, s) in rows.iter().zip(shap) {
        let k = &m.keys[i];
        let _ = write!(
            out,
            "{},{},{}",
            k.origin,
            k.dest,
            crate::time::format_timestamp(k.bucket_start)
        );
        for p in &s.phi {
            let _ = write!(out, ",{p}");
        }
        let _ = writeln!(out, ",{}", s.base_value);
    }
    out
}
