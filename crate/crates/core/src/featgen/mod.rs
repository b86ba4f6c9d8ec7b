//! Feature extraction: static spatial features per zone, calendar / lag /
//! covariate / seasonal temporal features, lag-1 network features, matrix
//! assembly and train-only scaling.

mod calendar;
mod lags;
mod matrix;
mod scaler;
mod seasonal;
mod spatial;

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flownet::{extract_network_features, network_feature_names, FlowGraph, NetworkOptions};
use crate::ingest::{CovariateSeries, HolidayCalendar};
use crate::time::{TimeBucket, TimeScale};

pub use calendar::{calendar_feature_names, calendar_features, WeekendDays};
pub use lags::{
    covariate_names, covariate_values, lag_feature_names, lag_features, target_lag_names, target_lag_values,
    AccessTracker, CovariateAccess, ROLLING_WINDOWS,
};
pub use matrix::{
    assemble_matrix, encode_matrix, parse_matrix, read_matrix, row_keys, write_matrix, Column, FeatureBlock,
    FeatureGroup, FeatureMatrix, RowKey, Split,
};
pub use scaler::{apply_scaler, fit_scaler, invert_scaler, ColumnScaling, ScalerState};
pub use seasonal::{
    fit_seasonal, fit_seasonal_with, seasonal_feature_names, seasonal_features, SeasonalComponents, SeasonalModel,
    DEFAULT_CHANGEPOINTS, SEASONAL_RIDGE, WEEKLY_ORDER, YEARLY_ORDER,
};
pub use spatial::{
    load_layer, spatial_line_length, spatial_point_count, spatial_polygon_area, spatial_table, GeometryKind,
    LayerElements, SpatialLayer, SpatialTable,
};

/// Options shared by every feature build.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOptions {
    pub lags: Vec<usize>,
    pub weekend: WeekendDays,
    pub network: NetworkOptions,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            lags: vec![1, 7],
            weekend: WeekendDays::default(),
            network: NetworkOptions::default(),
        }
    }
}

/// Inputs for one (scale, level) feature matrix.
pub struct FeatureInputs<'a> {
    pub level: &'a str,
    pub scale: TimeScale,
    pub graphs: &'a BTreeMap<TimeBucket, FlowGraph>,
    pub spatial: &'a SpatialTable,
    pub covariates: &'a [CovariateSeries],
    pub holidays: &'a HolidayCalendar,
    pub cutoff: i64,
}

/// Unscaled matrix plus the seasonal model fitted on pre-cutoff totals.
pub struct FeatureBuild {
    pub matrix: FeatureMatrix,
    pub seasonal: SeasonalModel,
}

pub fn temporal_feature_names(scale: TimeScale, lags: &[usize], covariates: &[CovariateSeries]) -> Vec<String> {
    let mut names = calendar_feature_names(scale);
    names.extend(lag_feature_names(lags, covariates));
    names.extend(seasonal_feature_names());
    names
}

pub fn spatial_feature_names(table: &SpatialTable) -> Vec<String> {
    let mut names: Vec<String> = table.names.iter().map(|n| format!("orig_{n}")).collect();
    names.extend(table.names.iter().map(|n| format!("dest_{n}")));
    names
}

/// Builds the feature matrix over every bucket from the first to the last
/// observed one. Split tags are left unset.
pub fn build_features(
    inp: &FeatureInputs<'_>,
    opts: &FeatureOptions,
    tracker: Option<&AccessTracker>,
) -> Result<FeatureBuild> {
    if opts.lags.contains(&0) {
        return Err(Error::Parameter("lags must be positive".into()));
    }
    let (first, last) = match (inp.graphs.keys().next(), inp.graphs.keys().next_back()) {
        (Some(a), Some(b)) => (a.start, b.start),
        _ => return Err(Error::Assembly("no flow graphs to build features from".into())),
    };
    let buckets: Vec<TimeBucket> = inp
        .scale
        .range(first, last)
        .into_iter()
        .map(|s| TimeBucket {
            scale: inp.scale,
            start: s,
        })
        .collect();
    let index: HashMap<i64, usize> = buckets.iter().enumerate().map(|(i, b)| (b.start, i)).collect();
    let nb = buckets.len();

    let totals: Vec<(TimeBucket, f64)> = buckets
        .iter()
        .map(|b| (*b, inp.graphs.get(b).map(|g| g.total_weight()).unwrap_or(0) as f64))
        .collect();
    let seasonal = fit_seasonal(&totals, inp.holidays, inp.cutoff)?;

    // dense per-edge count series
    let mut series: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for (b, g) in inp.graphs {
        let t = index[&b.start];
        for ((o, d), &w) in &g.edges {
            series.entry((o.clone(), d.clone())).or_insert_with(|| vec![0.0; nb])[t] = w as f64;
        }
    }

    let keys = row_keys(inp.graphs, &buckets);

    // per-bucket temporal parts that do not depend on the edge
    let per_bucket: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = buckets
        .par_iter()
        .map(|b| {
            (
                calendar_features(*b, inp.holidays, &opts.weekend),
                covariate_values(inp.covariates, *b, tracker),
                seasonal_features(&seasonal, *b).values().to_vec(),
            )
        })
        .collect();

    // network features from the previous bucket's graph
    let mut bucket_pairs: Vec<Vec<(String, String)>> = vec![Vec::new(); nb];
    for k in &keys {
        bucket_pairs[index[&k.bucket_start]].push((k.origin.clone(), k.dest.clone()));
    }
    let n_network = network_feature_names().len();
    let network: HashMap<RowKey, Vec<f64>> = (0..nb)
        .into_par_iter()
        .flat_map_iter(|t| -> Vec<(RowKey, Vec<f64>)> {
            let start = buckets[t].start;
            let key = |o: &String, d: &String| RowKey {
                origin: o.clone(),
                dest: d.clone(),
                bucket_start: start,
            };
            // the first bucket has no previous graph: missing, not empty
            if t == 0 {
                return bucket_pairs[0]
                    .iter()
                    .map(|(o, d)| (key(o, d), vec![f64::NAN; n_network]))
                    .collect();
            }
            let empty;
            let g_prev = match inp.graphs.get(&buckets[t - 1]) {
                Some(g) => g,
                None => {
                    empty = FlowGraph::empty(inp.level, buckets[t]);
                    &empty
                }
            };
            let rows = extract_network_features(g_prev, &bucket_pairs[t], &opts.network);
            rows.into_iter()
                .map(|r| (key(&r.origin, &r.dest), r.values()))
                .collect()
        })
        .collect();

    let spatial_block = FeatureBlock {
        group: FeatureGroup::Spatial,
        names: spatial_feature_names(inp.spatial),
        values: Box::new(|k: &RowKey| {
            let o = inp.spatial.values.get(&k.origin)?;
            let d = inp.spatial.values.get(&k.dest)?;
            Some(o.iter().chain(d).copied().collect())
        }),
    };
    let lags = opts.lags.clone();
    let temporal_block = FeatureBlock {
        group: FeatureGroup::Temporal,
        names: temporal_feature_names(inp.scale, &opts.lags, inp.covariates),
        values: Box::new(move |k: &RowKey| {
            let t = *index.get(&k.bucket_start)?;
            let s = series.get(&(k.origin.clone(), k.dest.clone()))?;
            let (cal, cov, seas) = &per_bucket[t];
            let mut v = cal.clone();
            v.extend(target_lag_values(&s[..t], &lags));
            v.extend(cov);
            v.extend(seas);
            Some(v)
        }),
    };
    let network_block = FeatureBlock {
        group: FeatureGroup::Network,
        names: network_feature_names(),
        values: Box::new(|k: &RowKey| network.get(k).cloned()),
    };
    let target = |k: &RowKey| {
        let b = TimeBucket {
            scale: inp.scale,
            start: k.bucket_start,
        };
        Some(inp.graphs.get(&b).map(|g| g.weight(&k.origin, &k.dest)).unwrap_or(0) as f64)
    };
    let matrix = assemble_matrix(
        inp.level,
        inp.scale,
        keys,
        &[spatial_block, temporal_block, network_block],
        &target,
    )?;
    Ok(FeatureBuild { matrix, seasonal })
}
