use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::calendar::bucket_dates;
use crate::error::{Error, Result};
use crate::ingest::HolidayCalendar;
use crate::linalg::ridge_centered;
use crate::time::{TimeBucket, TimeScale, SECONDS_PER_DAY};

pub const DEFAULT_CHANGEPOINTS: usize = 10;
pub const WEEKLY_ORDER: usize = 3;
pub const YEARLY_ORDER: usize = 10;
pub const SEASONAL_RIDGE: f64 = 1e-3;
const WEEK_DAYS: f64 = 7.0;
const YEAR_DAYS: f64 = 365.25;

/// Additive trend + Fourier seasonality + holiday model of bucket totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalModel {
    pub scale: TimeScale,
    /// First and last bucket start of the fit window.
    pub fit_start: i64,
    pub fit_end: i64,
    /// Changepoint offsets in days from `fit_start`.
    pub changepoints: Vec<f64>,
    pub span_days: f64,
    pub intercept: f64,
    pub slope: f64,
    /// Slope changes at each changepoint.
    pub deltas: Vec<f64>,
    /// `(sin, cos)` pairs for orders 1..; empty when the term was dropped.
    pub weekly: Vec<(f64, f64)>,
    pub yearly: Vec<(f64, f64)>,
    pub holiday_labels: Vec<String>,
    pub holiday_coefs: Vec<f64>,
    pub holidays: HolidayCalendar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalComponents {
    pub trend: f64,
    pub weekly: f64,
    pub yearly: f64,
    pub holiday: f64,
    pub yhat: f64,
}

impl SeasonalComponents {
    pub fn values(&self) -> [f64; 5] {
        [self.trend, self.weekly, self.yearly, self.holiday, self.yhat]
    }
}

pub fn seasonal_feature_names() -> Vec<String> {
    [
        "trend_component",
        "weekly_component",
        "yearly_component",
        "holiday_component",
        "yhat",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

struct Layout {
    fit_start: i64,
    span_days: f64,
    changepoints: Vec<f64>,
    weekly: usize,
    yearly: usize,
    labels: Vec<String>,
}

impl Layout {
    fn days(&self, ts: i64) -> f64 {
        (ts - self.fit_start) as f64 / SECONDS_PER_DAY as f64
    }

    fn ncols(&self) -> usize {
        1 + self.changepoints.len() + 2 * (self.weekly + self.yearly) + self.labels.len()
    }

    fn trend_row(&self, tau: f64, out: &mut Vec<f64>) {
        out.push(tau / self.span_days);
        for &c in &self.changepoints {
            out.push((tau - c).max(0.0) / self.span_days);
        }
    }

    fn row(&self, bucket: TimeBucket, cal: &HolidayCalendar, out: &mut Vec<f64>) {
        let tau = self.days(bucket.start);
        self.trend_row(tau, out);
        fourier(tau, WEEK_DAYS, self.weekly, out);
        fourier(tau, YEAR_DAYS, self.yearly, out);
        holiday_row(bucket, cal, &self.labels, out);
    }
}

fn fourier(tau: f64, period: f64, order: usize, out: &mut Vec<f64>) {
    for k in 1..=order {
        let a = 2.0 * PI * k as f64 * tau / period;
        out.push(a.sin());
        out.push(a.cos());
    }
}

fn holiday_row(bucket: TimeBucket, cal: &HolidayCalendar, labels: &[String], out: &mut Vec<f64>) {
    let dates = bucket_dates(bucket);
    let n = dates.len() as f64;
    for l in labels {
        let hits = dates.iter().filter(|d| cal.label(**d) == Some(l.as_str())).count();
        out.push(hits as f64 / n);
    }
}

/// Fit on bucket totals that start before `cutoff`; later entries are ignored.
pub fn fit_seasonal(history: &[(TimeBucket, f64)], cal: &HolidayCalendar, cutoff: i64) -> Result<SeasonalModel> {
    fit_seasonal_with(history, cal, cutoff, DEFAULT_CHANGEPOINTS)
}

pub fn fit_seasonal_with(
    history: &[(TimeBucket, f64)],
    cal: &HolidayCalendar,
    cutoff: i64,
    n_changepoints: usize,
) -> Result<SeasonalModel> {
    let mut rows: Vec<(TimeBucket, f64)> = history.iter().copied().filter(|(b, _)| b.start < cutoff).collect();
    if rows.len() < history.len() {
        log::debug!(
            "seasonal fit: ignoring {} buckets at or after the cut-off",
            history.len() - rows.len()
        );
    }
    if rows.is_empty() {
        return Err(Error::Fit(
            "seasonal model needs at least one bucket before the cut-off".into(),
        ));
    }
    rows.sort_by_key(|(b, _)| b.start);
    let scale = rows[0].0.scale;
    if rows.iter().any(|(b, _)| b.scale != scale) {
        return Err(Error::Fit("seasonal history mixes time scales".into()));
    }
    let fit_start = rows[0].0.start;
    let fit_end = rows[rows.len() - 1].0.start;
    let raw_span = (fit_end - fit_start) as f64 / SECONDS_PER_DAY as f64;
    let span_days = if raw_span > 0.0 { raw_span } else { 1.0 };

    let weekly = if scale == TimeScale::Monthly {
        0
    } else if raw_span < 14.0 {
        log::warn!("seasonal fit: {raw_span:.1} days of history, dropping weekly terms");
        0
    } else {
        WEEKLY_ORDER
    };
    let yearly = if raw_span < 365.0 {
        log::warn!("seasonal fit: {raw_span:.1} days of history, dropping yearly terms");
        0
    } else {
        YEARLY_ORDER
    };
    let window_cal: BTreeMap<_, _> = cal
        .dates
        .iter()
        .filter(|(d, _)| {
            let ts = crate::time::date_to_timestamp(**d);
            ts >= fit_start && ts < cutoff
        })
        .map(|(d, l)| (*d, l.clone()))
        .collect();
    let labels = HolidayCalendar { dates: window_cal }.labels();
    let changepoints = (1..=n_changepoints)
        .map(|j| raw_span * j as f64 / (n_changepoints + 1) as f64)
        .collect();
    let layout = Layout {
        fit_start,
        span_days,
        changepoints,
        weekly,
        yearly,
        labels,
    };

    let p = layout.ncols();
    let mut data = Vec::with_capacity(rows.len() * p);
    for (b, _) in &rows {
        layout.row(*b, cal, &mut data);
    }
    let x = DMatrix::from_row_slice(rows.len(), p, &data);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|(_, v)| *v));
    let (intercept, beta) = ridge_centered(&x, &y, SEASONAL_RIDGE)?;

    let k = layout.changepoints.len();
    let mut at = 1 + k;
    let pairs = |at: &mut usize, order: usize| -> Vec<(f64, f64)> {
        let v = (0..order).map(|i| (beta[*at + 2 * i], beta[*at + 2 * i + 1])).collect();
        *at += 2 * order;
        v
    };
    let weekly_c = pairs(&mut at, layout.weekly);
    let yearly_c = pairs(&mut at, layout.yearly);
    let holiday_coefs = beta.as_slice()[at..].to_vec();
    Ok(SeasonalModel {
        scale,
        fit_start,
        fit_end,
        span_days,
        intercept,
        slope: beta[0],
        deltas: beta.as_slice()[1..1 + k].to_vec(),
        changepoints: layout.changepoints,
        weekly: weekly_c,
        yearly: yearly_c,
        holiday_labels: layout.labels,
        holiday_coefs,
        holidays: cal.clone(),
    })
}

fn fourier_value(tau: f64, period: f64, coefs: &[(f64, f64)]) -> f64 {
    coefs
        .iter()
        .enumerate()
        .map(|(i, (s, c))| {
            let a = 2.0 * PI * (i + 1) as f64 * tau / period;
            s * a.sin() + c * a.cos()
        })
        .sum()
}

impl SeasonalModel {
    /// Slope change at each changepoint, in `(offset_days, delta)` pairs.
    pub fn trend_changes(&self) -> Vec<(f64, f64)> {
        self.changepoints
            .iter()
            .copied()
            .zip(self.deltas.iter().copied())
            .collect()
    }
}

/// Component values at `bucket`; beyond the fit window the trend continues
/// linearly with the slope after the last changepoint.
pub fn seasonal_features(model: &SeasonalModel, bucket: TimeBucket) -> SeasonalComponents {
    let tau = (bucket.start - model.fit_start) as f64 / SECONDS_PER_DAY as f64;
    let s = model.span_days;
    let trend = model.intercept
        + model.slope * tau / s
        + model
            .changepoints
            .iter()
            .zip(&model.deltas)
            .map(|(c, d)| d * (tau - c).max(0.0) / s)
            .sum::<f64>();
    let weekly = fourier_value(tau, WEEK_DAYS, &model.weekly);
    let yearly = fourier_value(tau, YEAR_DAYS, &model.yearly);
    let mut hrow = Vec::with_capacity(model.holiday_labels.len());
    holiday_row(bucket, &model.holidays, &model.holiday_labels, &mut hrow);
    let holiday = hrow.iter().zip(&model.holiday_coefs).map(|(a, b)| a * b).sum();
    SeasonalComponents {
        trend,
        weekly,
        yearly,
        holiday,
        yhat: trend + weekly + yearly + holiday,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    const T0: i64 = 1_640_995_200;

    fn daily(values: impl IntoIterator<Item = f64>) -> Vec<(TimeBucket, f64)> {
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                (
                    TimeBucket::containing(TimeScale::Daily, T0 + i as i64 * SECONDS_PER_DAY),
                    v,
                )
            })
            .collect()
    }

    fn bucket(k: i64) -> TimeBucket {
        TimeBucket::containing(TimeScale::Daily, T0 + k * SECONDS_PER_DAY)
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(matches!(
            fit_seasonal(&[], &HolidayCalendar::default(), T0),
            Err(Error::Fit(_))
        ));
        let h = daily([1.0, 2.0]);
        assert!(fit_seasonal(&h, &HolidayCalendar::default(), T0).is_err());
    }

    #[test]
    fn constant_series() {
        let h = daily(std::iter::repeat_n(100.0, 400));
        let m = fit_seasonal(&h, &HolidayCalendar::default(), i64::MAX).unwrap();
        assert!(m.weekly.len() == WEEKLY_ORDER && m.yearly.len() == YEARLY_ORDER);
        for (s, c) in m.weekly.iter().chain(&m.yearly) {
            assert!(s.abs() < 1e-6 && c.abs() < 1e-6);
        }
        assert!(m.slope.abs() < 1e-6 && m.deltas.iter().all(|d| d.abs() < 1e-6));
        let f = seasonal_features(&m, bucket(10));
        assert!((f.trend - 100.0).abs() < 1e-6);
        let mut prev = seasonal_features(&m, bucket(400)).yhat;
        for k in 401..430 {
            let y = seasonal_features(&m, bucket(k)).yhat;
            assert!((y - prev).abs() < 1e-3);
            assert!((y - 100.0).abs() < 1e-3);
            prev = y;
        }
    }

    #[test]
    fn weekly_sinusoid() {
        let wave = |k: i64| 10.0 * (2.0 * PI * k as f64 / 7.0).sin();
        let h = daily((0..84).map(|k| 50.0 + wave(k)));
        let m = fit_seasonal(&h, &HolidayCalendar::default(), i64::MAX).unwrap();
        assert!(m.yearly.is_empty());
        let ybar = h.iter().map(|(_, v)| v).sum::<f64>() / h.len() as f64;
        let (mut ss_res, mut ss_tot) = (0.0, 0.0);
        for (b, v) in &h {
            let f = seasonal_features(&m, *b);
            ss_res += (v - f.yhat).powi(2);
            ss_tot += (v - ybar).powi(2);
        }
        assert!(1.0 - ss_res / ss_tot >= 0.99);
        // one period past the fit window
        let amp = (m.weekly[0].0.powi(2) + m.weekly[0].1.powi(2)).sqrt();
        assert!((amp - 10.0).abs() < 0.5, "amplitude {amp}");
        for k in 84..91 {
            let w = seasonal_features(&m, bucket(k)).weekly;
            assert!((w - wave(k)).abs() < 0.5);
        }
    }

    #[test]
    fn step_trend_changepoint() {
        let t_step = 60;
        let h = daily((0..120).map(|t| {
            if t < t_step {
                t as f64
            } else {
                t_step as f64 + 3.0 * (t - t_step) as f64
            }
        }));
        let m = fit_seasonal(&h, &HolidayCalendar::default(), i64::MAX).unwrap();
        let spacing = m.span_days / (DEFAULT_CHANGEPOINTS + 1) as f64;
        let (c, _) = m
            .trend_changes()
            .into_iter()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        assert!((c - t_step as f64).abs() <= 2.0 * spacing, "changepoint at {c}");
    }

    #[test]
    fn inside_window_matches_fitted() {
        let mut cal = HolidayCalendar::default();
        cal.insert(NaiveDate::from_ymd_opt(2022, 1, 20).unwrap(), Some("x".into()))
            .unwrap();
        let h = daily((0..40).map(|k| (k % 7) as f64 + if k == 19 { 30.0 } else { 0.0 }));
        let m = fit_seasonal(&h, &cal, T0 + 40 * SECONDS_PER_DAY).unwrap();
        assert_eq!(m.holiday_labels, vec!["x"]);
        let f = seasonal_features(&m, bucket(19));
        assert!(f.holiday > 20.0);
        assert_eq!(f.yhat, f.trend + f.weekly + f.yearly + f.holiday);
        assert!(m.fit_end < T0 + 40 * SECONDS_PER_DAY);
    }

    #[test]
    fn cutoff_excludes_later_buckets() {
        let h = daily((0..30).map(|k| k as f64));
        let m = fit_seasonal(&h, &HolidayCalendar::default(), T0 + 20 * SECONDS_PER_DAY).unwrap();
        assert_eq!(m.fit_end, T0 + 19 * SECONDS_PER_DAY);
        assert!(m.weekly.len() == WEEKLY_ORDER);
    }

    #[test]
    fn monthly_drops_weekly() {
        let h: Vec<(TimeBucket, f64)> = TimeScale::Monthly
            .range(T0, T0 + 500 * SECONDS_PER_DAY)
            .into_iter()
            .map(|s| (TimeBucket::containing(TimeScale::Monthly, s), 5.0))
            .collect();
        let m = fit_seasonal(&h, &HolidayCalendar::default(), i64::MAX).unwrap();
        assert!(m.weekly.is_empty());
        assert_eq!(m.yearly.len(), YEARLY_ORDER);
    }
}
