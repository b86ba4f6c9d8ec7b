//! Trip, covariate and holiday-calendar ingestion plus trip cleaning.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::time::{self, Cadence};

/// One micromobility ride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub origin: Point,
    pub destination: Point,
    pub duration_s: i64,
}

impl TripRecord {
    /// Build a record, recomputing the duration from the timestamps.
    pub fn new(
        trip_id: impl Into<String>,
        start_ts: i64,
        end_ts: i64,
        origin: Point,
        destination: Point,
    ) -> Result<Self> {
        if end_ts < start_ts {
            return Err(Error::Domain("end_ts precedes start_ts".into()));
        }
        Ok(TripRecord {
            trip_id: trip_id.into(),
            start_ts,
            end_ts,
            origin,
            destination,
            duration_s: end_ts - start_ts,
        })
    }

    fn has_coordinates(&self) -> bool {
        self.origin.x.is_finite()
            && self.origin.y.is_finite()
            && self.destination.x.is_finite()
            && self.destination.y.is_finite()
    }
}

/// Duration bounds for abnormal-trip removal, in seconds (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub t_min_s: i64,
    pub t_max_s: i64,
}

impl CleaningPolicy {
    pub fn new(t_min_s: i64, t_max_s: i64) -> Result<Self> {
        if t_min_s < 0 || t_min_s >= t_max_s {
            return Err(Error::Parameter(format!(
                "cleaning policy requires 0 <= t_min_s < t_max_s, got ({t_min_s}, {t_max_s})"
            )));
        }
        Ok(CleaningPolicy { t_min_s, t_max_s })
    }
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        CleaningPolicy {
            t_min_s: 30,
            t_max_s: 7_200,
        }
    }
}

/// Column mapping for the trips CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSchema {
    pub trip_id: Option<String>,
    pub start_ts: String,
    pub end_ts: String,
    pub origin_x: String,
    pub origin_y: String,
    pub dest_x: String,
    pub dest_y: String,
}

impl Default for TripSchema {
    fn default() -> Self {
        TripSchema {
            trip_id: Some("trip_id".into()),
            start_ts: "start_ts".into(),
            end_ts: "end_ts".into(),
            origin_x: "origin_x".into(),
            origin_y: "origin_y".into(),
            dest_x: "dest_x".into(),
            dest_y: "dest_y".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct TripLoad {
    pub records: Vec<TripRecord>,
    pub rejected: Vec<RejectedRow>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parse a trips CSV. Unparseable rows are reported in `rejected`, never fatal.
pub fn load_trips(path: &Path, schema: &TripSchema) -> Result<TripLoad> {
    let bytes = read_file(path)?;
    parse_trips(&bytes, schema)
}

pub fn parse_trips(bytes: &[u8], schema: &TripSchema) -> Result<TripLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = rdr
        .byte_headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name.as_bytes())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let start_i = find(&schema.start_ts)?;
    let end_i = find(&schema.end_ts)?;
    let ox_i = find(&schema.origin_x)?;
    let oy_i = find(&schema.origin_y)?;
    let dx_i = find(&schema.dest_x)?;
    let dy_i = find(&schema.dest_y)?;
    let id_i = match &schema.trip_id {
        Some(name) => Some(find(name)?),
        None => None,
    };

    let mut out = TripLoad::default();
    let mut record = csv::ByteRecord::new();
    let mut row = 0usize;
    loop {
        match rdr.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                row += 1;
                out.rejected.push(RejectedRow {
                    row,
                    reason: e.to_string(),
                });
                continue;
            }
        }
        row += 1;
        let field =
            |i: usize| -> Option<&str> { record.get(i).and_then(|b| std::str::from_utf8(b).ok()).map(str::trim) };
        let num = |i: usize| -> Option<f64> {
            field(i)
                .filter(|s| !s.is_empty())
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let parsed = (|| {
            let start = field(start_i)
                .and_then(time::parse_timestamp)
                .ok_or("unparseable start_ts")?;
            let end = field(end_i)
                .and_then(time::parse_timestamp)
                .ok_or("unparseable end_ts")?;
            let origin = Point::new(
                num(ox_i).ok_or("unparseable origin x")?,
                num(oy_i).ok_or("unparseable origin y")?,
            );
            let dest = Point::new(
                num(dx_i).ok_or("unparseable destination x")?,
                num(dy_i).ok_or("unparseable destination y")?,
            );
            if end < start {
                return Err("end_ts precedes start_ts");
            }
            let id = match id_i {
                Some(i) => field(i).unwrap_or("").to_string(),
                None => format!("row{row}"),
            };
            Ok(TripRecord {
                trip_id: id,
                start_ts: start,
                end_ts: end,
                origin,
                destination: dest,
                duration_s: end - start,
            })
        })();
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) => out.rejected.push(RejectedRow {
                row,
                reason: reason.to_string(),
            }),
        }
    }
    if !out.rejected.is_empty() {
        log::warn!("{} trip rows rejected", out.rejected.len());
    }
    if out.records.is_empty() {
        log::warn!("no valid trip rows");
    }
    Ok(out)
}

/// Write trips in the canonical CSV layout (default schema column names).
pub fn write_trips(path: &Path, trips: &[TripRecord]) -> Result<()> {
    let mut s = String::with_capacity(trips.len() * 96);
    s.push_str("trip_id,start_ts,end_ts,origin_x,origin_y,dest_x,dest_y,duration_s\n");
    for t in trips {
        let _ = writeln!(
            s,
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            t.trip_id,
            time::format_timestamp(t.start_ts),
            time::format_timestamp(t.end_ts),
            t.origin.x,
            t.origin.y,
            t.destination.x,
            t.destination.y,
            t.duration_s
        );
    }
    write_bytes(path, s.as_bytes())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Per-reason removal counts from [`clean_trips`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub retained: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub missing_coordinates: usize,
}

/// Keep trips with `t_min_s <= duration_s <= t_max_s` and complete endpoints.
pub fn clean_trips(trips: &[TripRecord], policy: &CleaningPolicy) -> (Vec<TripRecord>, CleaningReport) {
    let mut report = CleaningReport {
        input: trips.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(trips.len());
    for t in trips {
        if !t.has_coordinates() {
            report.missing_coordinates += 1;
        } else if t.duration_s < policy.t_min_s {
            report.too_short += 1;
        } else if t.duration_s > policy.t_max_s {
            report.too_long += 1;
        } else {
            kept.push(t.clone());
        }
    }
    report.retained = kept.len();
    (kept, report)
}

/// Whether a covariate may be read for the bucket it describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateKind {
    /// Known for the prediction period (forecasts, calendar).
    Forecastable,
    /// Only past values may be used.
    LagOnly,
}

impl std::str::FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "forecastable" => Ok(CovariateKind::Forecastable),
            "lag-only" | "lagonly" => Ok(CovariateKind::LagOnly),
            other => Err(Error::Manifest(format!("unknown covariate kind `{other}`"))),
        }
    }
}

/// Exogenous time series keyed by period start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSeries {
    pub name: String,
    pub cadence: Cadence,
    pub kind: CovariateKind,
    pub values: BTreeMap<i64, f64>,
}

impl CovariateSeries {
    pub fn new(name: impl Into<String>, cadence: Cadence, kind: CovariateKind) -> Self {
        CovariateSeries {
            name: name.into(),
            cadence,
            kind,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: i64, value: f64) -> Result<()> {
        if !self.cadence.is_aligned(key) {
            return Err(Error::Domain(format!(
                "key {} of `{}` not aligned to its cadence",
                time::format_timestamp(key),
                self.name
            )));
        }
        if self.values.insert(key, value).is_some() {
            return Err(Error::Domain(format!(
                "duplicate key {} in `{}`",
                time::format_timestamp(key),
                self.name
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Column declaration from the covariate sidecar manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnDecl {
    pub cadence: Cadence,
    pub kind: CovariateKind,
}

/// Manifest grammar, one declaration per line:
///
/// ```text
/// # comment
/// temp_c = daily, forecastable
/// brent_usd = daily, lag-only
/// ```
pub fn parse_covariate_manifest(text: &str) -> Result<BTreeMap<String, ColumnDecl>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, rhs) = line
            .split_once('=')
            .ok_or_else(|| Error::Manifest(format!("line {}: expected `column = cadence, kind`", n + 1)))?;
        let mut parts = rhs.split(',').map(str::trim);
        let cadence = parts
            .next()
            .ok_or_else(|| Error::Manifest(format!("line {}: missing cadence", n + 1)))?
            .parse()?;
        let kind = parts
            .next()
            .ok_or_else(|| Error::Manifest(format!("line {}: missing kind", n + 1)))?
            .parse()?;
        if out
            .insert(name.trim().to_string(), ColumnDecl { cadence, kind })
            .is_some()
        {
            return Err(Error::Manifest(format!("column `{}` declared twice", name.trim())));
        }
    }
    Ok(out)
}

pub fn load_covariates(path: &Path, manifest_path: &Path) -> Result<Vec<CovariateSeries>> {
    let table = read_file(path)?;
    let manifest = read_file(manifest_path)?;
    let manifest = String::from_utf8(manifest).map_err(|_| Error::Manifest("manifest is not UTF-8".into()))?;
    parse_covariates(&table, &parse_covariate_manifest(&manifest)?)
}

pub fn parse_covariates(bytes: &[u8], manifest: &BTreeMap<String, ColumnDecl>) -> Result<Vec<CovariateSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let date_i = headers
        .iter()
        .position(|h| h == "date")
        .ok_or_else(|| Error::MissingColumn("date".into()))?;
    let mut series = Vec::new();
    let mut cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == date_i {
            continue;
        }
        let decl = manifest
            .get(h)
            .ok_or_else(|| Error::Manifest(format!("column `{h}` is not declared in the manifest")))?;
        cols.push(i);
        series.push(CovariateSeries::new(h, decl.cadence, decl.kind));
    }
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let key_s = rec.get(date_i).unwrap_or("");
        let key = time::parse_timestamp(key_s).ok_or_else(|| Error::Parse {
            row,
            message: format!("malformed date key `{key_s}`"),
        })?;
        for (s, &i) in series.iter_mut().zip(&cols) {
            let cell = rec.get(i).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric value `{cell}` in column `{}`", s.name),
            })?;
            s.insert(key, v).map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
        }
    }
    Ok(series)
}

/// Write series as a wide table plus manifest, the inverse of [`load_covariates`].
pub fn write_covariates(path: &Path, manifest_path: &Path, series: &[CovariateSeries]) -> Result<()> {
    let mut keys: Vec<i64> = series.iter().flat_map(|s| s.values.keys().copied()).collect();
    keys.sort_unstable();
    keys.dedup();
    let date_only = series.iter().all(|s| s.cadence != Cadence::Hourly);
    let mut out = String::from("date");
    for s in series {
        out.push(',');
        out.push_str(&s.name);
    }
    out.push('\n');
    for k in keys {
        if date_only {
            out.push_str(&time::timestamp_to_date(k).format("%Y-%m-%d").to_string());
        } else {
            out.push_str(&time::format_timestamp(k));
        }
        for s in series {
            out.push(',');
            if let Some(v) = s.values.get(&k) {
                // shortest representation that round-trips exactly
                let _ = write!(out, "{v:?}");
            }
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())?;
    let mut m = String::new();
    for s in series {
        let cadence = match s.cadence {
            Cadence::Hourly => "hourly",
            Cadence::Daily => "daily",
            Cadence::Weekly => "weekly",
            Cadence::Monthly => "monthly",
        };
        let kind = match s.kind {
            CovariateKind::Forecastable => "forecastable",
            CovariateKind::LagOnly => "lag-only",
        };
        let _ = writeln!(m, "{} = {cadence}, {kind}", s.name);
    }
    write_bytes(manifest_path, m.as_bytes())
}

/// Holiday dates with optional labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    pub dates: BTreeMap<NaiveDate, Option<String>>,
}

impl HolidayCalendar {
    pub fn insert(&mut self, date: NaiveDate, label: Option<String>) -> Result<()> {
        if self.dates.insert(date, label).is_some() {
            return Err(Error::Domain(format!("duplicate holiday {date}")));
        }
        Ok(())
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains_key(&date)
    }

    pub fn label(&self, date: NaiveDate) -> Option<&str> {
        self.dates
            .get(&date)
            .map(|l| l.as_deref().unwrap_or(DEFAULT_HOLIDAY_LABEL))
    }

    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        let mut out: Vec<String> = Vec::new();
        for l in self.dates.values() {
            let l = l.as_deref().unwrap_or(DEFAULT_HOLIDAY_LABEL);
            if seen.insert(l, ()).is_none() {
                out.push(l.to_string());
            }
        }
        out.sort();
        out
    }
}

pub const DEFAULT_HOLIDAY_LABEL: &str = "holiday";

pub fn load_holidays(path: &Path) -> Result<HolidayCalendar> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        row: 0,
        message: "holiday file is not UTF-8".into(),
    })?;
    parse_holidays(&text)
}

pub fn parse_holidays(text: &str) -> Result<HolidayCalendar> {
    let mut cal = HolidayCalendar::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (d, label) = match line.split_once('\t') {
            Some((d, l)) => (d, Some(l.trim().to_string()).filter(|l| !l.is_empty())),
            None => (line, None),
        };
        let date = time::parse_date(d).ok_or_else(|| Error::Parse {
            row: n + 1,
            message: format!("malformed holiday date `{}`", d.trim()),
        })?;
        cal.insert(date, label).map_err(|e| Error::Parse {
            row: n + 1,
            message: e.to_string(),
        })?;
    }
    Ok(cal)
}

pub fn write_holidays(path: &Path, cal: &HolidayCalendar) -> Result<()> {
    let mut s = String::new();
    for (d, l) in &cal.dates {
        match l {
            Some(l) => {
                let _ = writeln!(s, "{}\t{l}", d.format("%Y-%m-%d"));
            }
            None => {
                let _ = writeln!(s, "{}", d.format("%Y-%m-%d"));
            }
        }
    }
    write_bytes(path, s.as_bytes())
}
