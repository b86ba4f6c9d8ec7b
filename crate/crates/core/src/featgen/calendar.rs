use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::ingest::HolidayCalendar;
use crate::time::{self, TimeBucket, TimeScale};

/// Days counted as weekend. Defaults to Friday and Saturday.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekendDays(pub Vec<Weekday>);

impl Default for WeekendDays {
    fn default() -> Self {
        WeekendDays(vec![Weekday::Fri, Weekday::Sat])
    }
}

impl WeekendDays {
    pub fn contains(&self, d: Weekday) -> bool {
        self.0.contains(&d)
    }

    pub fn parse(names: &[String]) -> crate::Result<Self> {
        names
            .iter()
            .map(|n| {
                n.parse::<Weekday>()
                    .map_err(|_| crate::Error::Config(format!("unknown weekday `{n}`")))
            })
            .collect::<crate::Result<Vec<_>>>()
            .map(WeekendDays)
    }
}

const DOW: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];

pub fn calendar_feature_names(scale: TimeScale) -> Vec<String> {
    let mut names = vec!["is_weekend".to_string(), "is_holiday".to_string()];
    names.extend(DOW.iter().map(|d| format!("dow_{d}")));
    names.extend((1..=12).map(|m| format!("month_{m:02}")));
    if scale == TimeScale::Hourly {
        names.extend((0..24).map(|h| format!("hour_{h:02}")));
    }
    names
}

/// Dates covered by a bucket; a single date unless the bucket is a month.
pub(crate) fn bucket_dates(bucket: TimeBucket) -> Vec<NaiveDate> {
    let first = time::timestamp_to_date(bucket.start);
    match bucket.scale {
        TimeScale::Monthly => {
            let last = time::timestamp_to_date(bucket.end() - 1);
            let days = (last - first).num_days();
            (0..=days).map(|k| first + Duration::days(k)).collect()
        }
        _ => vec![first],
    }
}

/// Calendar features in [`calendar_feature_names`] order. For a monthly
/// bucket the day-level indicators become the fraction of its days.
pub fn calendar_features(bucket: TimeBucket, cal: &HolidayCalendar, weekend: &WeekendDays) -> Vec<f64> {
    let dates = bucket_dates(bucket);
    let n = dates.len() as f64;
    let mut v = vec![0.0; calendar_feature_names(bucket.scale).len()];
    for d in &dates {
        let wd = d.weekday();
        if weekend.contains(wd) {
            v[0] += 1.0 / n;
        }
        if cal.contains(*d) {
            v[1] += 1.0 / n;
        }
        v[2 + wd.num_days_from_monday() as usize] += 1.0 / n;
    }
    v[9 + dates[0].month0() as usize] = 1.0;
    if bucket.scale == TimeScale::Hourly {
        v[21 + time::hour_of(bucket.start) as usize] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn daily(y: i32, m: u32, d: u32) -> TimeBucket {
        TimeBucket::containing(
            TimeScale::Daily,
            time::date_to_timestamp(NaiveDate::from_ymd_opt(y, m, d).unwrap()),
        )
    }

    fn get(v: &[f64], scale: TimeScale, name: &str) -> f64 {
        let i = calendar_feature_names(scale).iter().position(|n| n == name).unwrap();
        v[i]
    }

    #[test]
    fn holiday_and_weekend() {
        let mut cal = HolidayCalendar::default();
        cal.insert(NaiveDate::from_ymd_opt(2022, 4, 16).unwrap(), None).unwrap();
        // 2022-04-16 is a Saturday
        let v = calendar_features(daily(2022, 4, 16), &cal, &WeekendDays::default());
        assert_eq!(get(&v, TimeScale::Daily, "is_holiday"), 1.0);
        assert_eq!(get(&v, TimeScale::Daily, "is_weekend"), 1.0);
        assert_eq!(get(&v, TimeScale::Daily, "dow_sat"), 1.0);
        assert_eq!(get(&v, TimeScale::Daily, "month_04"), 1.0);
        // Tuesday with a Sat+Sun weekend
        let wk = WeekendDays(vec![Weekday::Sat, Weekday::Sun]);
        let v = calendar_features(daily(2022, 4, 19), &cal, &wk);
        assert_eq!(get(&v, TimeScale::Daily, "is_weekend"), 0.0);
        assert_eq!(get(&v, TimeScale::Daily, "is_holiday"), 0.0);
    }

    #[test]
    fn hourly_has_hour_one_hot() {
        let ts = time::parse_timestamp("2022-03-01T17:00:00Z").unwrap();
        let b = TimeBucket::containing(TimeScale::Hourly, ts);
        let v = calendar_features(b, &HolidayCalendar::default(), &WeekendDays::default());
        assert_eq!(v.len(), 2 + 7 + 12 + 24);
        assert_eq!(get(&v, TimeScale::Hourly, "hour_17"), 1.0);
        assert_eq!(v[21..].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn monthly_fractions() {
        let ts = time::parse_timestamp("2022-02-01").unwrap();
        let b = TimeBucket::containing(TimeScale::Monthly, ts);
        let v = calendar_features(b, &HolidayCalendar::default(), &WeekendDays::default());
        // February 2022 has 4 Fridays and 4 Saturdays out of 28 days
        assert!((get(&v, TimeScale::Monthly, "is_weekend") - 8.0 / 28.0).abs() < 1e-12);
        assert!((v[2..9].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(get(&v, TimeScale::Monthly, "month_02"), 1.0);
    }

    #[test]
    fn parse_weekend_names() {
        let w = WeekendDays::parse(&["Sat".into(), "sunday".into()]).unwrap();
        assert_eq!(w.0, vec![Weekday::Sat, Weekday::Sun]);
        assert!(WeekendDays::parse(&["funday".into()]).is_err());
    }
}
