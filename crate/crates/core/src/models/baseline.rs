use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featgen::{seasonal_features, FeatureMatrix, RowKey, SeasonalModel, Split};
use crate::time::TimeBucket;

/// Seasonal forecast of the city-wide total, split across OD pairs by each
/// pair's share of training-window flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalBaseline {
    pub model: SeasonalModel,
    /// `origin -> dest -> share`; pairs absent from training get 0.
    pub shares: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Shares come from train-tagged rows of `m`.
pub fn fit_seasonal_baseline(model: &SeasonalModel, m: &FeatureMatrix) -> Result<SeasonalBaseline> {
    let train = m.rows_in(Split::Train);
    if train.is_empty() {
        return Err(Error::Split("seasonal baseline needs train-tagged rows".into()));
    }
    let mut flow: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut total = 0.0;
    for &i in &train {
        let k = &m.keys[i];
        *flow
            .entry(k.origin.clone())
            .or_default()
            .entry(k.dest.clone())
            .or_insert(0.0) += m.target[i];
        total += m.target[i];
    }
    if total > 0.0 {
        for inner in flow.values_mut() {
            for v in inner.values_mut() {
                *v /= total;
            }
        }
    }
    Ok(SeasonalBaseline {
        model: model.clone(),
        shares: flow,
    })
}

impl SeasonalBaseline {
    pub fn share(&self, origin: &str, dest: &str) -> f64 {
        self.shares
            .get(origin)
            .and_then(|m| m.get(dest))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn predict_key(&self, key: &RowKey) -> f64 {
        let b = TimeBucket {
            scale: self.model.scale,
            start: key.bucket_start,
        };
        seasonal_features(&self.model, b).yhat * self.share(&key.origin, &key.dest)
    }
}
