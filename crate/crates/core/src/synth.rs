//! Seeded synthetic city: a grid of square zones with gravity-model OD
//! rates, Poisson trip counts, GIS layers, weather covariates and holidays.
//!
//! The expected rate of pair `(i, j)` on day `t` is
//!
//! ```text
//! λ_ij(t) = V · g_ij · a_i(t) a_j(t) · e_ij(t) · weekly(t) · yearly(t) · weather(t) · holiday(t)
//! g_ij    = m_i m_j / d_ij^β  normalised to sum to 1
//! ```
//!
//! where `a_i` is a slowly drifting zone activity factor and `e_ij` a
//! day-to-day persistent pair factor (both log-AR(1); zero sigma disables
//! them). With a positive supply elasticity `γ` departures also follow the
//! vehicles the origin gained the day before:
//!
//! ```text
//! λ_ij(t) ← λ_ij(t) · ((arrivals_i(t−1) + 1) / (departures_i(t−1) + 1))^γ
//! ```
//!
//! so day `t`'s rates depend on day `t−1`'s realized counts. Ground truth
//! goes to a directory the pipeline never reads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featgen::SpatialLayer;
use crate::geom::Point;
use crate::ingest::{
    write_bytes, write_covariates, write_holidays, write_trips, CovariateKind, CovariateSeries, HolidayCalendar,
    TripRecord,
};
use crate::partition::{partition_to_json, SpatialPartition, Zone};
use crate::time::{date_to_timestamp, Cadence, SECONDS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CityScenario {
    pub seed: u64,
    pub level: String,
    pub n_zones: usize,
    pub zone_side_m: f64,
    /// Explicit zone masses; drawn log-normally from the seed when absent.
    pub masses: Option<Vec<f64>>,
    pub mass_sigma: f64,
    pub gravity_beta: f64,
    /// Expected city-wide trips per day before seasonal factors.
    pub daily_volume: f64,
    pub weekly_amplitude: f64,
    pub yearly_amplitude: f64,
    /// Rate multiplier on a day with 10 mm of rain or more.
    pub rain_multiplier: f64,
    pub holiday_multiplier: f64,
    pub zone_drift_rho: f64,
    pub zone_drift_sigma: f64,
    pub pair_rho: f64,
    pub pair_sigma: f64,
    /// Exponent on the origin's previous-day arrivals over departures.
    pub supply_elasticity: f64,
    /// Poisson counts when true, rounded rates otherwise.
    pub noise: bool,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub min_duration_s: i64,
    pub max_duration_s: i64,
}

impl Default for CityScenario {
    fn default() -> Self {
        CityScenario {
            seed: 42,
            level: "quarters".into(),
            n_zones: 9,
            zone_side_m: 1000.0,
            masses: None,
            mass_sigma: 0.6,
            gravity_beta: 1.0,
            daily_volume: 3000.0,
            weekly_amplitude: 0.25,
            yearly_amplitude: 0.3,
            rain_multiplier: 0.6,
            holiday_multiplier: 0.5,
            zone_drift_rho: 0.97,
            zone_drift_sigma: 0.06,
            pair_rho: 0.7,
            pair_sigma: 0.1,
            supply_elasticity: 0.7,
            noise: true,
            start_date: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            n_days: 365,
            min_duration_s: 60,
            max_duration_s: 3600,
        }
    }
}

impl CityScenario {
    /// Every problem with the scenario parameters.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(format!("synth: {msg}"));
            }
        };
        need(self.n_zones >= 1, "n_zones must be >= 1");
        need(self.n_days >= 1, "n_days must be >= 1");
        need(
            self.zone_side_m > 0.0 && self.zone_side_m.is_finite(),
            "zone_side_m must be > 0",
        );
        need(self.gravity_beta >= 0.0, "gravity_beta must be >= 0");
        need(
            self.daily_volume > 0.0 && self.daily_volume.is_finite(),
            "daily_volume must be > 0",
        );
        need(self.mass_sigma >= 0.0, "mass_sigma must be >= 0");
        need(
            (0.0..1.0).contains(&self.weekly_amplitude),
            "weekly_amplitude must lie in [0, 1)",
        );
        need(
            (0.0..1.0).contains(&self.yearly_amplitude),
            "yearly_amplitude must lie in [0, 1)",
        );
        need(
            self.rain_multiplier > 0.0 && self.rain_multiplier <= 1.0,
            "rain_multiplier must lie in (0, 1]",
        );
        need(self.holiday_multiplier > 0.0, "holiday_multiplier must be > 0");
        need(self.zone_drift_rho.abs() < 1.0, "zone_drift_rho must lie in (-1, 1)");
        need(self.pair_rho.abs() < 1.0, "pair_rho must lie in (-1, 1)");
        need(
            self.zone_drift_sigma >= 0.0 && self.pair_sigma >= 0.0,
            "drift sigmas must be >= 0",
        );
        need(
            (0.0..=1.0).contains(&self.supply_elasticity),
            "supply_elasticity must lie in [0, 1]",
        );
        need(
            self.min_duration_s >= 1 && self.min_duration_s < self.max_duration_s,
            "durations need 1 <= min_duration_s < max_duration_s",
        );
        if let Some(m) = &self.masses {
            need(m.len() == self.n_zones, "masses must have one entry per zone");
            need(m.iter().all(|&v| v > 0.0 && v.is_finite()), "masses must be positive");
        }
        out
    }

    fn check(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(p.join("; ")))
        }
    }

    fn grid_cols(&self) -> usize {
        (self.n_zones as f64).sqrt().ceil() as usize
    }

    pub fn zone_ids(&self) -> Vec<String> {
        let width = self.n_zones.to_string().len();
        (1..=self.n_zones).map(|i| format!("q{i:0width$}")).collect()
    }

    /// Lower-left corner of zone `i` (row-major from the origin).
    fn corner(&self, i: usize) -> Point {
        let c = self.grid_cols();
        Point::new((i % c) as f64 * self.zone_side_m, (i / c) as f64 * self.zone_side_m)
    }

    fn centroid(&self, i: usize) -> Point {
        let p = self.corner(i);
        Point::new(p.x + self.zone_side_m / 2.0, p.y + self.zone_side_m / 2.0)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.n_days)
            .map(|k| self.start_date + Duration::days(k as i64))
            .collect()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }
}

const STREAM_MASSES: u64 = 0;
const STREAM_LAYERS: u64 = 1;
const STREAM_WEATHER: u64 = 2;
const STREAM_DRIFT: u64 = 3;
const STREAM_DAY0: u64 = 1 << 20;
const STREAM_COUNT0: u64 = 1 << 21;

/// Seasonal and exogenous multipliers of one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayFactors {
    pub date: NaiveDate,
    pub weekly: f64,
    pub yearly: f64,
    pub weather: f64,
    pub holiday: f64,
}

impl DayFactors {
    pub fn product(&self) -> f64 {
        self.weekly * self.yearly * self.weather * self.holiday
    }
}

/// Everything the generator knows and the pipeline must not see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAnswers {
    pub scenario: CityScenario,
    pub zone_ids: Vec<String>,
    pub masses: Vec<f64>,
    /// Normalised gravity shares, row-major `origin * n + dest`.
    pub gravity: Vec<f64>,
    pub days: Vec<DayFactors>,
    /// Zone activity factors per day, `[day][zone]`.
    pub zone_activity: Vec<Vec<f64>>,
    /// Overnight supply factors per day, `[day][zone]`.
    pub supply: Vec<Vec<f64>>,
    /// Expected counts per day given the days before, row-major
    /// `origin * n + dest`.
    pub rates: Vec<Vec<f64>>,
    pub expected_total: f64,
    /// Features through which the planted structure reaches the matrix.
    pub true_dependencies: Vec<String>,
}

impl PlantedAnswers {
    pub fn rate(&self, day: usize, origin: usize, dest: usize) -> f64 {
        self.rates[day][origin * self.zone_ids.len() + dest]
    }
}

fn masses(s: &CityScenario) -> Vec<f64> {
    if let Some(m) = &s.masses {
        return m.clone();
    }
    let mut rng = s.rng(STREAM_MASSES);
    let d = LogNormal::new(0.0, s.mass_sigma).expect("sigma checked");
    (0..s.n_zones).map(|_| d.sample(&mut rng)).collect()
}

fn gravity(s: &CityScenario, m: &[f64]) -> Vec<f64> {
    let n = s.n_zones;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = if i == j {
                s.zone_side_m / 2.0
            } else {
                let (a, b) = (s.centroid(i), s.centroid(j));
                ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
            };
            g[i * n + j] = m[i] * m[j] / d.powf(s.gravity_beta);
        }
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    g
}

struct Weather {
    temp_c: Vec<f64>,
    rain_mm: Vec<f64>,
    brent_usd: Vec<f64>,
}

fn weather(s: &CityScenario) -> Weather {
    let mut rng = s.rng(STREAM_WEATHER);
    let amount = Exp::new(1.0 / 6.0).expect("positive rate");
    let jitter = Normal::new(0.0, 2.0).expect("positive sd");
    let step = Normal::new(0.0, 1.0).expect("positive sd");
    let mut w = Weather {
        temp_c: Vec::with_capacity(s.n_days),
        rain_mm: Vec::with_capacity(s.n_days),
        brent_usd: Vec::with_capacity(s.n_days),
    };
    let mut brent = 80.0;
    for d in s.dates() {
        let phase = 2.0 * PI * (d.ordinal() as f64 - 200.0) / 365.25;
        w.temp_c.push(20.0 + 8.0 * phase.cos() + jitter.sample(&mut rng));
        let p_rain = (0.2 - 0.15 * phase.cos()).clamp(0.0, 1.0);
        let wet = rng.random::<f64>() < p_rain;
        let mm = amount.sample(&mut rng);
        w.rain_mm.push(if wet { mm } else { 0.0 });
        brent += step.sample(&mut rng);
        w.brent_usd.push(brent);
    }
    w
}

/// Holiday dates inside the scenario window, labelled by occasion.
pub fn scenario_holidays(s: &CityScenario) -> HolidayCalendar {
    let fixed: [(u32, u32, &str); 11] = [
        (1, 1, "new_year"),
        (4, 15, "spring"),
        (4, 16, "spring"),
        (7, 4, "summer"),
        (10, 5, "autumn_fast"),
        (10, 10, "autumn_festival"),
        (10, 11, "autumn_festival"),
        (10, 12, "autumn_festival"),
        (10, 13, "autumn_festival"),
        (12, 25, "winter"),
        (12, 26, "winter"),
    ];
    let dates = s.dates();
    let (first, last) = (dates[0], *dates.last().unwrap());
    let mut cal = HolidayCalendar::default();
    for y in first.year()..=last.year() {
        for &(m, d, label) in &fixed {
            if let Some(date) = NaiveDate::from_ymd_opt(y, m, d) {
                if date >= first && date <= last {
                    cal.insert(date, Some(label.to_string())).expect("distinct dates");
                }
            }
        }
    }
    cal
}

fn day_factors(s: &CityScenario, w: &Weather, cal: &HolidayCalendar) -> Vec<DayFactors> {
    s.dates()
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let dow = d.weekday().num_days_from_monday() as f64;
            let doy = d.ordinal() as f64;
            DayFactors {
                date: d,
                weekly: 1.0 + s.weekly_amplitude * (2.0 * PI * dow / 7.0).sin(),
                yearly: 1.0 + s.yearly_amplitude * (2.0 * PI * (doy - 200.0) / 365.25).cos(),
                weather: 1.0 - (1.0 - s.rain_multiplier) * (w.rain_mm[k] / 10.0).min(1.0),
                holiday: if cal.contains(d) { s.holiday_multiplier } else { 1.0 },
            }
        })
        .collect()
}

/// Log-AR(1) paths started from the stationary law.
fn ar_paths(rng: &mut ChaCha8Rng, count: usize, days: usize, rho: f64, sigma: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0; count]; days];
    if sigma == 0.0 {
        return out;
    }
    let shock = Normal::new(0.0, sigma).expect("positive sd");
    let start = Normal::new(0.0, sigma / (1.0 - rho * rho).sqrt()).expect("positive sd");
    let mut u: Vec<f64> = (0..count).map(|_| start.sample(rng)).collect();
    for row in out.iter_mut() {
        for (k, v) in u.iter_mut().enumerate() {
            row[k] = v.exp();
            *v = rho * *v + shock.sample(rng);
        }
    }
    out
}

/// Ground truth for `s`: the exact rates `generate` samples from.
pub fn planted_answers(s: &CityScenario) -> Result<PlantedAnswers> {
    Ok(simulate(s)?.0)
}

/// Rates and OD counts day by day; each day's counts come from its own
/// stream of the root seed.
fn simulate(s: &CityScenario) -> Result<(PlantedAnswers, Vec<Vec<u64>>)> {
    s.check()?;
    let n = s.n_zones;
    let m = masses(s);
    let g = gravity(s, &m);
    let w = weather(s);
    let cal = scenario_holidays(s);
    let days = day_factors(s, &w, &cal);
    let mut rng = s.rng(STREAM_DRIFT);
    let zone = ar_paths(&mut rng, n, s.n_days, s.zone_drift_rho, s.zone_drift_sigma);
    let pair = ar_paths(&mut rng, n * n, s.n_days, s.pair_rho, s.pair_sigma);
    let mut supply = vec![vec![1.0; n]; s.n_days];
    let mut rates = Vec::with_capacity(s.n_days);
    let mut counts: Vec<Vec<u64>> = Vec::with_capacity(s.n_days);
    for t in 0..s.n_days {
        if let (Some(prev), true) = (counts.last(), s.supply_elasticity > 0.0) {
            for i in 0..n {
                let arrivals: u64 = (0..n).map(|k| prev[k * n + i]).sum();
                let departures: u64 = prev[i * n..(i + 1) * n].iter().sum();
                let ratio = (arrivals as f64 + 1.0) / (departures as f64 + 1.0);
                supply[t][i] = ratio.powf(s.supply_elasticity);
            }
        }
        let f = days[t].product();
        let day: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                s.daily_volume * g[k] * zone[t][i] * zone[t][j] * pair[t][k] * supply[t][i] * f
            })
            .collect();
        let mut crng = s.rng(STREAM_COUNT0 + t as u64);
        counts.push(
            day.iter()
                .map(|&lam| {
                    if s.noise {
                        Poisson::new(lam).expect("positive rate").sample(&mut crng) as u64
                    } else {
                        lam.round() as u64
                    }
                })
                .collect(),
        );
        rates.push(day);
    }
    let expected_total = rates.iter().flatten().sum();
    let mut deps = vec![
        "previous_count".to_string(),
        "cov_rain_mm".to_string(),
        "is_holiday".to_string(),
        "weekly_component".to_string(),
        "yearly_component".to_string(),
    ];
    if s.zone_drift_sigma > 0.0 {
        deps.extend(["orig_strength_out", "dest_strength_in"].map(String::from));
    }
    if s.supply_elasticity > 0.0 {
        deps.push("orig_strength_in".to_string());
    }
    let truth = PlantedAnswers {
        scenario: s.clone(),
        zone_ids: s.zone_ids(),
        masses: m,
        gravity: g,
        days,
        zone_activity: zone,
        supply,
        rates,
        expected_total,
        true_dependencies: deps,
    };
    Ok((truth, counts))
}

/// Everything the pipeline consumes, plus the truth it must not read.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub trips: Vec<TripRecord>,
    pub partition: SpatialPartition,
    pub layers: Vec<SpatialLayer>,
    pub covariates: Vec<CovariateSeries>,
    pub holidays: HolidayCalendar,
    pub truth: PlantedAnswers,
}

fn zones(s: &CityScenario) -> Result<SpatialPartition> {
    let side = s.zone_side_m;
    let zs = s
        .zone_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let p = s.corner(i);
            let ring = vec![
                p,
                Point::new(p.x + side, p.y),
                Point::new(p.x + side, p.y + side),
                Point::new(p.x, p.y + side),
                p,
            ];
            Zone::new(id, s.level.clone(), ring)
        })
        .collect::<Result<Vec<_>>>()?;
    SpatialPartition::new(s.level.clone(), zs)
}

fn inside(rng: &mut ChaCha8Rng, corner: Point, side: f64) -> Point {
    Point::new(
        corner.x + side * (0.001 + 0.998 * rng.random::<f64>()),
        corner.y + side * (0.001 + 0.998 * rng.random::<f64>()),
    )
}

fn layers(s: &CityScenario, masses: &[f64]) -> Result<Vec<SpatialLayer>> {
    let mut rng = s.rng(STREAM_LAYERS);
    let side = s.zone_side_m;
    let mean_mass = masses.iter().sum::<f64>() / masses.len() as f64;
    let mut stops = Vec::new();
    for (i, m) in masses.iter().enumerate() {
        let k = Poisson::new(8.0 * m / mean_mass)
            .expect("positive rate")
            .sample(&mut rng) as usize;
        stops.extend((0..k).map(|_| inside(&mut rng, s.corner(i), side)));
    }
    let cols = s.grid_cols() as f64;
    let rows = (s.n_zones as f64 / cols).ceil();
    let (w, h) = (cols * side, rows * side);
    let mut lanes = Vec::new();
    for _ in 0..6 {
        lanes.push(
            (0..3)
                .map(|_| Point::new(w * rng.random::<f64>(), h * rng.random::<f64>()))
                .collect(),
        );
    }
    let mut parks = Vec::new();
    for _ in 0..5 {
        let (pw, ph) = (rng.random_range(0.2..0.7) * side, rng.random_range(0.2..0.7) * side);
        let x0 = rng.random::<f64>() * (w - pw);
        let y0 = rng.random::<f64>() * (h - ph);
        parks.push(vec![
            Point::new(x0, y0),
            Point::new(x0 + pw, y0),
            Point::new(x0 + pw, y0 + ph),
            Point::new(x0, y0 + ph),
            Point::new(x0, y0),
        ]);
    }
    Ok(vec![
        SpatialLayer::points("bus_stops", stops),
        SpatialLayer::lines("bike_lanes", lanes)?,
        SpatialLayer::polygons("parks", parks)?,
    ])
}

/// Relative trip start frequency per hour of day.
const DIURNAL: [f64; 24] = [
    0.2, 0.1, 0.1, 0.1, 0.2, 0.4, 0.8, 1.4, 1.8, 1.4, 1.0, 1.0, 1.2, 1.1, 1.0, 1.1, 1.4, 1.8, 1.7, 1.3, 1.0, 0.8, 0.6,
    0.4,
];

fn day_trips(s: &CityScenario, t: usize, counts: &[u64]) -> Vec<TripRecord> {
    let n = s.n_zones;
    let mut rng = s.rng(STREAM_DAY0 + t as u64);
    let day_start = date_to_timestamp(s.start_date) + t as i64 * SECONDS_PER_DAY;
    let hour_cdf: Vec<f64> = DIURNAL
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let hour_total = hour_cdf[23];
    let mut out = Vec::new();
    for (k, &count) in counts.iter().enumerate() {
        let (i, j) = (k / n, k % n);
        for _ in 0..count {
            let o = inside(&mut rng, s.corner(i), s.zone_side_m);
            let d = inside(&mut rng, s.corner(j), s.zone_side_m);
            let u = rng.random::<f64>() * hour_total;
            let hour = hour_cdf.iter().position(|&c| u < c).unwrap_or(23) as i64;
            let start = day_start + hour * 3600 + rng.random_range(0..3600);
            let dist = ((o.x - d.x).powi(2) + (o.y - d.y).powi(2)).sqrt();
            let dur = (s.min_duration_s + (dist / 4.0) as i64 + rng.random_range(0..300))
                .clamp(s.min_duration_s, s.max_duration_s);
            let id = format!("d{t:04}-{:06}", out.len());
            out.push(TripRecord::new(id, start, start + dur, o, d).expect("positive duration"));
        }
    }
    out.sort_by(|a, b| a.start_ts.cmp(&b.start_ts).then_with(|| a.trip_id.cmp(&b.trip_id)));
    out
}

/// Generates the full scenario. Counts are simulated day by day; trip
/// endpoints and times are then sampled in parallel, each day from its own
/// stream of the root seed.
pub fn generate(s: &CityScenario) -> Result<SynthOutput> {
    let (truth, counts) = simulate(s)?;
    let per_day: Vec<Vec<TripRecord>> = (0..s.n_days)
        .into_par_iter()
        .map(|t| day_trips(s, t, &counts[t]))
        .collect();
    let trips: Vec<TripRecord> = per_day.into_iter().flatten().collect();
    let w = weather(s);
    let keys: Vec<i64> = s.dates().iter().map(|&d| date_to_timestamp(d)).collect();
    let series = |name: &str, kind: CovariateKind, v: &[f64]| -> Result<CovariateSeries> {
        let mut c = CovariateSeries::new(name, Cadence::Daily, kind);
        for (&k, &x) in keys.iter().zip(v) {
            c.insert(k, x)?;
        }
        Ok(c)
    };
    let covariates = vec![
        series("temp_c", CovariateKind::Forecastable, &w.temp_c)?,
        series("rain_mm", CovariateKind::Forecastable, &w.rain_mm)?,
        series("brent_usd", CovariateKind::LagOnly, &w.brent_usd)?,
    ];
    Ok(SynthOutput {
        trips,
        partition: zones(s)?,
        layers: layers(s, &truth.masses)?,
        covariates,
        holidays: scenario_holidays(s),
        truth,
    })
}

/// File locations written by [`write_synth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPaths {
    pub trips: PathBuf,
    pub zones: PathBuf,
    pub layers: Vec<PathBuf>,
    pub covariates: PathBuf,
    pub covariate_manifest: PathBuf,
    pub holidays: PathBuf,
    pub truth: PathBuf,
}

impl SynthPaths {
    pub fn under(data_dir: &Path, truth_dir: &Path, level: &str) -> Self {
        SynthPaths {
            trips: data_dir.join("trips.csv"),
            zones: data_dir.join(format!("zones_{level}.json")),
            layers: ["bus_stops", "bike_lanes", "parks"]
                .iter()
                .map(|n| data_dir.join("layers").join(format!("{n}.json")))
                .collect(),
            covariates: data_dir.join("covariates.csv"),
            covariate_manifest: data_dir.join("covariates.manifest"),
            holidays: data_dir.join("holidays.txt"),
            truth: truth_dir.join("planted_answers.json"),
        }
    }

    /// Every input file, truth excluded.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.trips.clone(), self.zones.clone()];
        v.extend(self.layers.iter().cloned());
        v.extend([
            self.covariates.clone(),
            self.covariate_manifest.clone(),
            self.holidays.clone(),
        ]);
        v
    }
}

/// Writes pipeline inputs under `data_dir` and the truth under `truth_dir`.
pub fn write_synth(out: &SynthOutput, data_dir: &Path, truth_dir: &Path) -> Result<SynthPaths> {
    let paths = SynthPaths::under(data_dir, truth_dir, &out.partition.level);
    write_trips(&paths.trips, &out.trips)?;
    write_bytes(&paths.zones, partition_to_json(&out.partition).as_bytes())?;
    let by_name: BTreeMap<&str, &SpatialLayer> = out.layers.iter().map(|l| (l.name.as_str(), l)).collect();
    for p in &paths.layers {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let layer = by_name
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("no generated layer `{name}`")))?;
        write_bytes(p, layer.to_json().as_bytes())?;
    }
    write_covariates(&paths.covariates, &paths.covariate_manifest, &out.covariates)?;
    write_holidays(&paths.holidays, &out.holidays)?;
    let truth = serde_json::to_string(&out.truth).map_err(|e| Error::Parameter(e.to_string()))?;
    write_bytes(&paths.truth, truth.as_bytes())?;
    Ok(paths)
}
