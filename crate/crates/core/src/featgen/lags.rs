use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ingest::{CovariateKind, CovariateSeries};
use crate::time::TimeBucket;

/// Windows of the rolling target means.
pub const ROLLING_WINDOWS: [usize; 2] = [3, 7];

/// One covariate value read during feature construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateAccess {
    pub series: String,
    pub kind: CovariateKind,
    pub key: i64,
    pub bucket_start: i64,
}

/// Records every covariate value read, for leakage audits.
#[derive(Debug, Default)]
pub struct AccessTracker {
    log: Mutex<Vec<CovariateAccess>>,
}

impl AccessTracker {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, a: CovariateAccess) {
        self.log.lock().expect("tracker lock").push(a);
    }

    pub fn accesses(&self) -> Vec<CovariateAccess> {
        self.log.lock().expect("tracker lock").clone()
    }

    /// Lag-only reads whose period ends after the bucket start.
    pub fn lag_only_violations(&self, series: &[CovariateSeries]) -> Vec<CovariateAccess> {
        self.accesses()
            .into_iter()
            .filter(|a| a.kind == CovariateKind::LagOnly)
            .filter(|a| {
                let cadence = series.iter().find(|s| s.name == a.series).map(|s| s.cadence);
                match cadence {
                    Some(c) => c.period_end(a.key) > a.bucket_start,
                    None => true,
                }
            })
            .collect()
    }
}

fn lag_name(lag: usize) -> String {
    if lag == 1 {
        "previous_count".to_string()
    } else {
        format!("previous_count_lag{lag}")
    }
}

pub fn target_lag_names(lags: &[usize]) -> Vec<String> {
    let mut names: Vec<String> = lags.iter().map(|&l| lag_name(l)).collect();
    names.extend(ROLLING_WINDOWS.iter().map(|w| format!("rolling_mean_{w}")));
    names
}

/// Target lags and rolling means from the edge's earlier bucket values,
/// oldest first (`history.last()` is the bucket right before the current
/// one). Missing history yields NaN, imputed later by the scaler.
pub fn target_lag_values(history: &[f64], lags: &[usize]) -> Vec<f64> {
    let n = history.len();
    let mut v: Vec<f64> = lags
        .iter()
        .map(|&l| if l >= 1 && l <= n { history[n - l] } else { f64::NAN })
        .collect();
    for w in ROLLING_WINDOWS {
        v.push(if n >= w {
            history[n - w..].iter().sum::<f64>() / w as f64
        } else {
            f64::NAN
        });
    }
    v
}

pub fn covariate_names(covariates: &[CovariateSeries]) -> Vec<String> {
    covariates
        .iter()
        .map(|s| match s.kind {
            CovariateKind::Forecastable => format!("cov_{}", s.name),
            CovariateKind::LagOnly => format!("cov_{}_prev", s.name),
        })
        .collect()
}

fn read(series: &CovariateSeries, key: i64, bucket: TimeBucket, tracker: Option<&AccessTracker>) -> f64 {
    if let Some(t) = tracker {
        t.record(CovariateAccess {
            series: series.name.clone(),
            kind: series.kind,
            key,
            bucket_start: bucket.start,
        });
    }
    series.values[&key]
}

/// Forecastable: mean over periods overlapping the bucket, falling back to
/// the latest earlier period (forward fill).
fn forecastable_value(s: &CovariateSeries, bucket: TimeBucket, tracker: Option<&AccessTracker>) -> f64 {
    let first = s.cadence.truncate(bucket.start);
    let keys: Vec<i64> = s.values.range(first..bucket.end()).map(|(&k, _)| k).collect();
    if !keys.is_empty() {
        return keys.iter().map(|&k| read(s, k, bucket, tracker)).sum::<f64>() / keys.len() as f64;
    }
    match s.values.range(..first).next_back() {
        Some((&k, _)) => read(s, k, bucket, tracker),
        None => f64::NAN,
    }
}

/// Lag-only: the latest period that has fully ended by the bucket start.
fn lag_only_value(s: &CovariateSeries, bucket: TimeBucket, tracker: Option<&AccessTracker>) -> f64 {
    let key = s
        .values
        .range(..bucket.start)
        .rev()
        .map(|(&k, _)| k)
        .find(|&k| s.cadence.period_end(k) <= bucket.start);
    match key {
        Some(k) => read(s, k, bucket, tracker),
        None => f64::NAN,
    }
}

/// Covariate values for one bucket in [`covariate_names`] order.
pub fn covariate_values(
    covariates: &[CovariateSeries],
    bucket: TimeBucket,
    tracker: Option<&AccessTracker>,
) -> Vec<f64> {
    covariates
        .iter()
        .map(|s| match s.kind {
            CovariateKind::Forecastable => forecastable_value(s, bucket, tracker),
            CovariateKind::LagOnly => lag_only_value(s, bucket, tracker),
        })
        .collect()
}

pub fn lag_feature_names(lags: &[usize], covariates: &[CovariateSeries]) -> Vec<String> {
    let mut names = target_lag_names(lags);
    names.extend(covariate_names(covariates));
    names
}

/// Target lags, rolling means and joined covariates for one edge and bucket.
pub fn lag_features(
    history: &[f64],
    covariates: &[CovariateSeries],
    bucket: TimeBucket,
    lags: &[usize],
    tracker: Option<&AccessTracker>,
) -> Vec<f64> {
    let mut v = target_lag_values(history, lags);
    v.extend(covariate_values(covariates, bucket, tracker));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{Cadence, TimeScale, SECONDS_PER_DAY};
    use proptest::prelude::*;

    const T0: i64 = 1_640_995_200; // 2022-01-01, a Saturday

    fn day(k: i64) -> TimeBucket {
        TimeBucket::containing(TimeScale::Daily, T0 + k * SECONDS_PER_DAY)
    }

    #[test]
    fn previous_count_is_last_value() {
        let v = target_lag_values(&[2.0, 5.0, 9.0], &[1]);
        assert_eq!(v[0], 9.0);
        // rolling 3 over [2, 5, 9]; rolling 7 lacks history
        assert_eq!(v[1], 16.0 / 3.0);
        assert!(v[2].is_nan());
    }

    #[test]
    fn lag_three_at_third_bucket() {
        // 3rd bucket of the series: history holds buckets 0 and 1
        let v = target_lag_values(&[4.0, 6.0], &[1, 2, 3]);
        assert_eq!(v[0], 6.0);
        assert_eq!(v[1], 4.0);
        assert!(v[2].is_nan());
        // 4th bucket: lag 3 refers to the first bucket
        let v = target_lag_values(&[4.0, 6.0, 7.0], &[3]);
        assert_eq!(v[0], 4.0);
    }

    #[test]
    fn names_match_values() {
        let lags = [1, 7];
        assert_eq!(
            target_lag_names(&lags),
            vec![
                "previous_count",
                "previous_count_lag7",
                "rolling_mean_3",
                "rolling_mean_7"
            ]
        );
        assert_eq!(target_lag_values(&[1.0; 10], &lags).len(), 4);
    }

    fn daily_series(name: &str, kind: CovariateKind, days: i64) -> CovariateSeries {
        let mut s = CovariateSeries::new(name, Cadence::Daily, kind);
        for k in 0..days {
            s.insert(T0 + k * SECONDS_PER_DAY, k as f64).unwrap();
        }
        s
    }

    #[test]
    fn forecastable_reads_own_bucket_lag_only_reads_previous() {
        let f = daily_series("temp", CovariateKind::Forecastable, 10);
        let l = daily_series("oil", CovariateKind::LagOnly, 10);
        let v = covariate_values(&[f.clone(), l.clone()], day(4), None);
        assert_eq!(v, vec![4.0, 3.0]);
        assert_eq!(
            covariate_names(&[f.clone(), l.clone()]),
            vec!["cov_temp", "cov_oil_prev"]
        );
        // past the series end: forward fill
        let v = covariate_values(&[f, l], day(20), None);
        assert_eq!(v, vec![9.0, 9.0]);
    }

    #[test]
    fn weekly_lag_only_uses_completed_week() {
        let mut s = CovariateSeries::new("w", Cadence::Weekly, CovariateKind::LagOnly);
        // Mondays 2022-01-03 and 2022-01-10
        s.insert(T0 + 2 * SECONDS_PER_DAY, 1.0).unwrap();
        s.insert(T0 + 9 * SECONDS_PER_DAY, 2.0).unwrap();
        // Wednesday 2022-01-12: the week of the 10th has not ended
        assert_eq!(covariate_values(&[s.clone()], day(11), None), vec![1.0]);
        assert!(covariate_values(&[s.clone()], day(5), None)[0].is_nan());
        // Monday 2022-01-17: the week of the 10th ended exactly at its start
        assert_eq!(covariate_values(&[s], day(16), None), vec![2.0]);
    }

    #[test]
    fn monthly_bucket_averages_daily_forecastable() {
        let f = daily_series("temp", CovariateKind::Forecastable, 40);
        let b = TimeBucket::containing(TimeScale::Monthly, T0);
        // mean of 0..=30
        assert_eq!(covariate_values(&[f], b, None), vec![15.0]);
    }

    #[test]
    fn missing_before_series_start() {
        let f = daily_series("temp", CovariateKind::Forecastable, 3);
        assert!(covariate_values(&[f], day(-2), None)[0].is_nan());
    }

    proptest! {
        // No lag-only read ever touches a period that ends after the bucket start.
        #[test]
        fn tracker_sees_no_future_lag_only_reads(
            cad in prop::sample::select(vec![Cadence::Hourly, Cadence::Daily, Cadence::Weekly, Cadence::Monthly]),
            scale in prop::sample::select(vec![TimeScale::Hourly, TimeScale::Daily, TimeScale::Monthly]),
            n in 1usize..60,
            offset_h in 0i64..24 * 120,
        ) {
            let mut s = CovariateSeries::new("x", cad, CovariateKind::LagOnly);
            let mut k = cad.truncate(T0);
            for i in 0..n {
                s.insert(k, i as f64).unwrap();
                k = cad.period_end(k);
            }
            let f = CovariateSeries { kind: CovariateKind::Forecastable, name: "y".into(), ..s.clone() };
            let series = vec![s, f];
            let tracker = AccessTracker::new();
            let b = TimeBucket::containing(scale, T0 + offset_h * 3_600);
            covariate_values(&series, b, Some(&tracker));
            prop_assert!(tracker.lag_only_violations(&series).is_empty());
            for a in tracker.accesses() {
                prop_assert!(a.key < b.end());
            }
        }
    }
}
