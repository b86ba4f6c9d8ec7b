use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, Design};
use crate::error::{Error, Result};

/// Relative tolerance under which two split gains count as tied.
pub const GAIN_TIE_TOL: f64 = 1e-9;
/// A split must reduce the node's squared error by more than this fraction.
pub const MIN_RELATIVE_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// CART regression tree. Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Structural checks on a deserialized tree.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::ModelFormat("tree has no nodes".into()));
        }
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(Error::ModelFormat(format!("node {i} reached twice")));
            }
            seen[i] = true;
            match self.nodes[i] {
                Node::Leaf { value, cover } => {
                    if !value.is_finite() || cover.is_nan() || cover < 0.0 {
                        return Err(Error::ModelFormat(format!("leaf {i} has invalid value or cover")));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    cover,
                } => {
                    if feature >= self.n_features
                        || !threshold.is_finite()
                        || left >= n
                        || right >= n
                        || cover.is_nan()
                        || cover < 0.0
                    {
                        return Err(Error::ModelFormat(format!("split node {i} is malformed")));
                    }
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::ModelFormat("tree has unreachable nodes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

/// One feature column as (value, sample) pairs sorted by value.
#[derive(Debug, Clone)]
pub(crate) struct SortedColumn {
    xs: Vec<f64>,
    ids: Vec<u32>,
}

/// Per-feature sort orders of a sample set; reusable across boosting stages.
#[derive(Debug, Clone)]
pub(crate) struct Presort {
    cols: Vec<SortedColumn>,
    n_samples: usize,
}

impl Presort {
    /// Samples are the design rows in order.
    pub(crate) fn new(x: &Design<'_>) -> Self {
        let n = x.nrows();
        let cols = (0..x.ncols())
            .map(|j| {
                let mut ids: Vec<u32> = (0..n as u32).collect();
                ids.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)).then(a.cmp(&b)));
                SortedColumn {
                    xs: ids.iter().map(|&i| x.get(i as usize, j)).collect(),
                    ids,
                }
            })
            .collect();
        Presort { cols, n_samples: n }
    }

    /// Bootstrap view: row `r` appears `counts[r]` times. Samples are laid
    /// out row by row, so sample `s` maps to the returned `rows[s]`.
    pub(crate) fn resample(&self, counts: &[u32]) -> (Presort, Vec<usize>) {
        let mut offset = Vec::with_capacity(counts.len());
        let mut rows = Vec::new();
        for (r, &c) in counts.iter().enumerate() {
            offset.push(rows.len() as u32);
            rows.extend(std::iter::repeat_n(r, c as usize));
        }
        let cols = self
            .cols
            .iter()
            .map(|col| {
                let mut xs = Vec::with_capacity(rows.len());
                let mut ids = Vec::with_capacity(rows.len());
                for (&x, &r) in col.xs.iter().zip(&col.ids) {
                    let r = r as usize;
                    for k in 0..counts[r] {
                        xs.push(x);
                        ids.push(offset[r] + k);
                    }
                }
                SortedColumn { xs, ids }
            })
            .collect();
        let n = rows.len();
        (Presort { cols, n_samples: n }, rows)
    }
}

struct Grower<'a, R: Rng> {
    y: &'a [f64],
    cols: Vec<SortedColumn>,
    goes_left: Vec<bool>,
    tmp_x: Vec<f64>,
    tmp_id: Vec<u32>,
    params: TreeParams,
    max_features: usize,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    n_left: usize,
    gain: f64,
}

impl<R: Rng> Grower<'_, R> {
    fn node_stats(&self, lo: usize, hi: usize) -> (f64, f64) {
        let ids = &self.cols[0].ids[lo..hi];
        let n = ids.len() as f64;
        let mean = ids.iter().map(|&s| self.y[s as usize]).sum::<f64>() / n;
        let sse = ids.iter().map(|&s| (self.y[s as usize] - mean).powi(2)).sum::<f64>();
        (mean, sse)
    }

    fn best_split(&mut self, lo: usize, hi: usize, mean: f64) -> Option<Candidate> {
        let p = self.cols.len();
        let features: Vec<usize> = match self.rng.as_deref_mut() {
            Some(rng) if self.max_features < p => {
                let mut f = sample(rng, p, self.max_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let n = hi - lo;
        let msl = self.params.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        for f in features {
            let col = &self.cols[f];
            let xs = &col.xs[lo..hi];
            let ids = &col.ids[lo..hi];
            if xs[0] == xs[n - 1] {
                continue;
            }
            let mut s_left = 0.0;
            for k in 0..n - 1 {
                s_left += self.y[ids[k] as usize] - mean;
                let n_left = k + 1;
                if xs[k] == xs[k + 1] || n_left < msl || n - n_left < msl {
                    continue;
                }
                let gain = s_left * s_left * (1.0 / n_left as f64 + 1.0 / (n - n_left) as f64);
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain * (1.0 + GAIN_TIE_TOL) && gain - b.gain > f64::MIN_POSITIVE,
                };
                if better {
                    let (a, b) = (xs[k], xs[k + 1]);
                    let mut t = a + (b - a) / 2.0;
                    if t <= a {
                        t = b;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold: t,
                        n_left,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn partition(&mut self, lo: usize, hi: usize, feature: usize, threshold: f64) {
        {
            let col = &self.cols[feature];
            for k in lo..hi {
                self.goes_left[col.ids[k] as usize] = col.xs[k] < threshold;
            }
        }
        for col in &mut self.cols {
            self.tmp_x.clear();
            self.tmp_id.clear();
            let mut w = lo;
            for k in lo..hi {
                let id = col.ids[k];
                if self.goes_left[id as usize] {
                    col.xs[w] = col.xs[k];
                    col.ids[w] = id;
                    w += 1;
                } else {
                    self.tmp_x.push(col.xs[k]);
                    self.tmp_id.push(id);
                }
            }
            col.xs[w..hi].copy_from_slice(&self.tmp_x);
            col.ids[w..hi].copy_from_slice(&self.tmp_id);
        }
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let (mean, sse) = self.node_stats(lo, hi);
        let n = hi - lo;
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            cover: n as f64,
        });
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n < 2 * self.params.min_samples_leaf || sse <= 0.0 {
            return idx;
        }
        let Some(best) = self.best_split(lo, hi, mean) else {
            return idx;
        };
        if best.gain.is_nan() || best.gain <= MIN_RELATIVE_GAIN * sse {
            return idx;
        }
        self.partition(lo, hi, best.feature, best.threshold);
        let mid = lo + best.n_left;
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            cover: n as f64,
        };
        idx
    }
}

/// Grows a tree on presorted samples with targets `y` (indexed by sample).
/// `max_features < p` draws that many candidate features per split from `rng`.
pub(crate) fn grow_tree<R: Rng>(
    presort: &Presort,
    y: &[f64],
    params: TreeParams,
    max_features: usize,
    rng: Option<&mut R>,
) -> RegressionTree {
    let n = presort.n_samples;
    let p = presort.cols.len();
    if n == 0 {
        return RegressionTree {
            nodes: vec![Node::Leaf { value: 0.0, cover: 0.0 }],
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            n_features: p,
        };
    }
    if p == 0 {
        let mean = y.iter().sum::<f64>() / n as f64;
        return RegressionTree {
            nodes: vec![Node::Leaf {
                value: mean,
                cover: n as f64,
            }],
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            n_features: 0,
        };
    }
    let mut g = Grower {
        y,
        cols: presort.cols.clone(),
        goes_left: vec![false; n],
        tmp_x: Vec::with_capacity(n),
        tmp_id: Vec::with_capacity(n),
        params,
        max_features: max_features.clamp(1, p),
        rng,
        nodes: Vec::new(),
    };
    g.grow(0, n, 0);
    RegressionTree {
        nodes: g.nodes,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        n_features: p,
    }
}

pub(crate) fn check_params(params: &TreeParams) -> Result<()> {
    if params.min_samples_leaf == 0 {
        return Err(Error::Parameter("min_samples_leaf must be >= 1".into()));
    }
    Ok(())
}

/// Greedy CART with exact split search over midpoints of sorted unique values.
pub fn fit_tree(
    x: &Design<'_>,
    y: &[f64],
    max_depth: Option<usize>,
    min_samples_leaf: usize,
) -> Result<RegressionTree> {
    check_xy(x, y)?;
    let params = TreeParams {
        max_depth,
        min_samples_leaf,
    };
    check_params(&params)?;
    let presort = Presort::new(x);
    Ok(grow_tree::<rand_chacha::ChaCha8Rng>(
        &presort,
        y,
        params,
        x.ncols(),
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_single_leaf() {
        let data = vec![0.0, 1.0, 2.0, 3.0];
        let x = Design::new(&data, 4, 1).unwrap();
        let t = fit_tree(&x, &[5.0; 4], None, 1).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 5.0, cover: 4.0 }]);
    }

    #[test]
    fn step_function_stump() {
        let data = vec![0.0, 1.0, 2.0, 3.0];
        let x = Design::new(&data, 4, 1).unwrap();
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], Some(1), 1).unwrap();
        match t.nodes[0] {
            Node::Split {
                threshold, left, right, ..
            } => {
                assert!(threshold > 1.0 && threshold < 2.0);
                assert_eq!(t.nodes[left], Node::Leaf { value: 0.0, cover: 2.0 });
                assert_eq!(t.nodes[right], Node::Leaf { value: 1.0, cover: 2.0 });
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // two identical columns
        let data = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let x = Design::new(&data, 4, 2).unwrap();
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], Some(1), 1).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_samples_leaf_respected() {
        let data: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..10).map(|i| if i == 0 { 100.0 } else { 0.0 }).collect();
        let x = Design::new(&data, 10, 1).unwrap();
        let t = fit_tree(&x, &y, None, 3).unwrap();
        for n in &t.nodes {
            if let Node::Leaf { cover, .. } = n {
                assert!(*cover >= 3.0);
            }
        }
        t.validate().unwrap();
        assert!(fit_tree(&x, &y, None, 0).is_err());
    }

    #[test]
    fn bootstrap_resample_matches_expanded_rows() {
        let data = vec![3.0, 1.0, 2.0, 0.0];
        let x = Design::new(&data, 4, 1).unwrap();
        let ps = Presort::new(&x);
        let (bs, rows) = ps.resample(&[2, 0, 1, 3]);
        assert_eq!(rows, vec![0, 0, 2, 3, 3, 3]);
        assert_eq!(bs.cols[0].xs, vec![0.0, 0.0, 0.0, 2.0, 3.0, 3.0]);
        for (x_s, &s) in bs.cols[0].xs.iter().zip(&bs.cols[0].ids) {
            assert_eq!(*x_s, data[rows[s as usize]]);
        }
    }
}
