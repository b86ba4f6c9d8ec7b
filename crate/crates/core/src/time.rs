//! Time scales, bucket alignment and timestamp parsing.
//!
//! All timestamps are UTC seconds since the Unix epoch.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Temporal aggregation granularity for trip buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScale {
    Hourly,
    Daily,
    Monthly,
}

impl TimeScale {
    pub const ALL: [TimeScale; 3] = [TimeScale::Hourly, TimeScale::Daily, TimeScale::Monthly];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeScale::Hourly => "hourly",
            TimeScale::Daily => "daily",
            TimeScale::Monthly => "monthly",
        }
    }

    /// Truncate `ts` down to the start of its bucket.
    pub fn truncate(self, ts: i64) -> i64 {
        match self {
            TimeScale::Hourly => ts.div_euclid(SECONDS_PER_HOUR) * SECONDS_PER_HOUR,
            TimeScale::Daily => ts.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY,
            TimeScale::Monthly => {
                let dt = to_datetime(ts);
                month_start(dt.year(), dt.month())
            }
        }
    }

    /// Start of the bucket following the one starting at `start`.
    pub fn next(self, start: i64) -> i64 {
        match self {
            TimeScale::Hourly => start + SECONDS_PER_HOUR,
            TimeScale::Daily => start + SECONDS_PER_DAY,
            TimeScale::Monthly => {
                let dt = to_datetime(start);
                let (y, m) = if dt.month() == 12 {
                    (dt.year() + 1, 1)
                } else {
                    (dt.year(), dt.month() + 1)
                };
                month_start(y, m)
            }
        }
    }

    pub fn is_aligned(self, ts: i64) -> bool {
        self.truncate(ts) == ts
    }

    /// Contiguous bucket starts covering `[first, last]` (both truncated).
    pub fn range(self, first: i64, last: i64) -> Vec<i64> {
        let mut out = Vec::new();
        let mut cur = self.truncate(first);
        let end = self.truncate(last);
        while cur <= end {
            out.push(cur);
            cur = self.next(cur);
        }
        out
    }
}

impl fmt::Display for TimeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hourly" | "hour" => Ok(TimeScale::Hourly),
            "daily" | "day" => Ok(TimeScale::Daily),
            "monthly" | "month" => Ok(TimeScale::Monthly),
            other => Err(Error::Parameter(format!("unknown time scale `{other}`"))),
        }
    }
}

/// One aggregation bucket: a scale and its aligned start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBucket {
    pub scale: TimeScale,
    pub start: i64,
}

impl TimeBucket {
    pub fn new(scale: TimeScale, start: i64) -> Result<Self> {
        if !scale.is_aligned(start) {
            return Err(Error::Domain(format!(
                "bucket start {} is not aligned to {scale}",
                format_timestamp(start)
            )));
        }
        Ok(TimeBucket { scale, start })
    }

    pub fn containing(scale: TimeScale, ts: i64) -> Self {
        TimeBucket {
            scale,
            start: scale.truncate(ts),
        }
    }

    pub fn end(&self) -> i64 {
        self.scale.next(self.start)
    }

    pub fn datetime(&self) -> DateTime<Utc> {
        to_datetime(self.start)
    }
}

/// Sampling cadence of an exogenous covariate series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cadence {
    Hourly,
    Daily,
    Weekly,
    Monthly,
}

impl Cadence {
    pub fn truncate(self, ts: i64) -> i64 {
        match self {
            Cadence::Hourly => TimeScale::Hourly.truncate(ts),
            Cadence::Daily => TimeScale::Daily.truncate(ts),
            Cadence::Monthly => TimeScale::Monthly.truncate(ts),
            Cadence::Weekly => {
                // weeks start on Monday; 1970-01-01 was a Thursday
                let day = ts.div_euclid(SECONDS_PER_DAY);
                let monday = day - (day + 3).rem_euclid(7);
                monday * SECONDS_PER_DAY
            }
        }
    }

    pub fn period_end(self, start: i64) -> i64 {
        match self {
            Cadence::Hourly => start + SECONDS_PER_HOUR,
            Cadence::Daily => start + SECONDS_PER_DAY,
            Cadence::Weekly => start + 7 * SECONDS_PER_DAY,
            Cadence::Monthly => TimeScale::Monthly.next(start),
        }
    }

    pub fn is_aligned(self, ts: i64) -> bool {
        self.truncate(ts) == ts
    }
}

impl FromStr for Cadence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hourly" => Ok(Cadence::Hourly),
            "daily" => Ok(Cadence::Daily),
            "weekly" => Ok(Cadence::Weekly),
            "monthly" => Ok(Cadence::Monthly),
            other => Err(Error::Manifest(format!("unknown cadence `{other}`"))),
        }
    }
}

fn month_start(year: i32, month: u32) -> i64 {
    Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0)
        .single()
        .expect("first of month is always valid")
        .timestamp()
}

pub fn to_datetime(ts: i64) -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp(ts, 0).expect("timestamp within chrono range")
}

/// Parse an ISO-8601 timestamp. Accepts an explicit offset (`Z`, `+02:00`),
/// a naive date-time (taken as UTC), or a bare date (midnight UTC).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    parse_date(s).map(date_to_timestamp)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

pub fn date_to_timestamp(d: NaiveDate) -> i64 {
    d.and_hms_opt(0, 0, 0).expect("midnight is valid").and_utc().timestamp()
}

pub fn timestamp_to_date(ts: i64) -> NaiveDate {
    to_datetime(ts).date_naive()
}

/// `YYYY-MM-DDTHH:MM:SSZ`
pub fn format_timestamp(ts: i64) -> String {
    to_datetime(ts).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Hour of day in 0..24.
pub fn hour_of(ts: i64) -> u32 {
    to_datetime(ts).hour()
}
