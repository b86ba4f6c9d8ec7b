//! Stage runner behind the CLI. Every stage reads only its declared inputs,
//! writes under the output directory and leaves a manifest with input and
//! output hashes; a stage whose manifest still matches is skipped.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{best_rows, evaluate_model, run_ablation, split, CutoffSpec, Report, ReportRow};
use crate::explain::{explain_rows, importance, sample_rows, shap_rows_csv};
use crate::featgen::{
    apply_scaler, build_features, encode_matrix, fit_scaler, parse_matrix, spatial_table, FeatureInputs, FeatureMatrix,
    FeatureOptions, SeasonalModel, SpatialLayer, Split,
};
use crate::flownet::{aggregate_od, AssignedTrips, FlowGraph};
use crate::ingest::{
    clean_trips, parse_covariate_manifest, parse_covariates, parse_holidays, parse_trips, write_bytes, CleaningReport,
    TripSchema,
};
use crate::models::{fit_model, model_from_json, model_to_json, Design, ModelSpec, MODEL_FORMAT_VERSION};
use crate::partition::{parse_partition, SpatialPartition};
use crate::synth::{generate, write_synth, SynthPaths};
use crate::time::{TimeBucket, TimeScale};

pub use config::{default_grid, AblationSection, ExplainSection, FeatureSection, InputPaths, ModelSection, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    Features,
    Train,
    Evaluate,
    Ablate,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Features,
        Stage::Train,
        Stage::Evaluate,
        Stage::Ablate,
        Stage::Explain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::Explain => "explain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    /// Terminal rendering of the stage's report, if it has one.
    pub summary: Option<String>,
}

/// Per-stage record written next to the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started: String,
    pub finished: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File access of one stage: reads are limited to the declared inputs and
/// every read and write is hashed into the manifest.
pub struct StageIo {
    stage: Stage,
    root: PathBuf,
    declared: BTreeSet<PathBuf>,
    inputs: Mutex<BTreeMap<String, String>>,
    outputs: Mutex<BTreeMap<String, String>>,
}

impl StageIo {
    fn new(stage: Stage, root: &Path, declared: Vec<PathBuf>) -> Self {
        StageIo {
            stage,
            root: root.to_path_buf(),
            declared: declared.into_iter().collect(),
            inputs: Mutex::new(BTreeMap::new()),
            outputs: Mutex::new(BTreeMap::new()),
        }
    }

    fn key(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    pub fn read(&self, path: &Path) -> Result<Vec<u8>> {
        if !self.declared.contains(path) {
            return Err(Error::Config(format!(
                "stage `{}` tried to read undeclared file {}",
                self.stage.name(),
                path.display()
            )));
        }
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Dependency(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        self.inputs.lock().unwrap().insert(self.key(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?).map_err(|_| Error::Parse {
            row: 0,
            message: format!("{} is not UTF-8", path.display()),
        })
    }

    pub fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_bytes(path, bytes)?;
        self.outputs.lock().unwrap().insert(self.key(path), sha256_hex(bytes));
        Ok(())
    }

    /// Hashes a file some other writer produced.
    fn record_output(&self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.outputs.lock().unwrap().insert(self.key(path), sha256_hex(&bytes));
        Ok(())
    }

    pub fn inputs(&self) -> BTreeMap<String, String> {
        self.inputs.lock().unwrap().clone()
    }

    pub fn outputs(&self) -> BTreeMap<String, String> {
        self.outputs.lock().unwrap().clone()
    }
}

#[derive(Serialize, Deserialize)]
struct GraphBucket {
    start: i64,
    nodes: Vec<String>,
    edges: Vec<(String, String, u64)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    level: String,
    scale: TimeScale,
    buckets: Vec<GraphBucket>,
}

fn graphs_to_json(level: &str, scale: TimeScale, graphs: &BTreeMap<TimeBucket, FlowGraph>) -> Vec<u8> {
    let f = GraphFile {
        level: level.to_string(),
        scale,
        buckets: graphs
            .values()
            .map(|g| GraphBucket {
                start: g.bucket.start,
                nodes: g.nodes.iter().cloned().collect(),
                edges: g.edges.iter().map(|((o, d), w)| (o.clone(), d.clone(), *w)).collect(),
            })
            .collect(),
    };
    serde_json::to_vec(&f).expect("graphs serialize")
}

fn graphs_from_json(bytes: &[u8]) -> Result<BTreeMap<TimeBucket, FlowGraph>> {
    let f: GraphFile = serde_json::from_slice(bytes).map_err(|e| Error::Manifest(format!("graph file: {e}")))?;
    let mut out = BTreeMap::new();
    for b in f.buckets {
        let bucket = TimeBucket::new(f.scale, b.start)?;
        let mut g = FlowGraph::empty(f.level.clone(), bucket);
        for n in b.nodes {
            g.add_node(n);
        }
        for (o, d, w) in b.edges {
            g.add_trips(o, d, w);
        }
        out.insert(bucket, g);
    }
    Ok(out)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    rows_rejected: usize,
    cleaning: &'a CleaningReport,
    dropped_unassigned: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct FailedModel<'a> {
    format_version: u32,
    kind: &'a str,
    error: String,
}

/// One (scale, level) combination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub scale: TimeScale,
    pub level: String,
}

impl Cell {
    pub fn id(&self) -> String {
        format!("{}_{}", self.scale.as_str(), self.level)
    }
}

struct CellData {
    matrix: FeatureMatrix,
    seasonal: SeasonalModel,
}

pub struct Pipeline {
    cfg: RunConfig,
    hash: String,
    root: PathBuf,
    force: bool,
}

impl Pipeline {
    /// Validates `cfg`, reporting every problem at once.
    pub fn new(cfg: RunConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            hash: cfg.hash(),
            root: cfg.output_dir.clone(),
            cfg,
            force,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn output_dir(&self) -> &Path {
        &self.root
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for scale in self.cfg.scales() {
            for level in &self.cfg.features.levels {
                out.push(Cell {
                    scale,
                    level: level.clone(),
                });
            }
        }
        out
    }

    pub fn synth_paths(&self) -> SynthPaths {
        SynthPaths::under(
            &self.root.join("synth"),
            &self.root.join("truth"),
            &self.cfg.synth.level,
        )
    }

    /// Whether some input falls back to the synthetic scenario.
    pub fn uses_synth(&self) -> bool {
        let p = &self.cfg.paths;
        p.trips.is_none()
            || p.layers.is_none()
            || p.covariates.is_none()
            || p.covariate_manifest.is_none()
            || p.holidays.is_none()
            || self.cfg.features.levels.iter().any(|l| !p.zones.contains_key(l))
    }

    fn trips_path(&self) -> PathBuf {
        self.cfg.paths.trips.clone().unwrap_or_else(|| self.synth_paths().trips)
    }

    fn zones_path(&self, level: &str) -> PathBuf {
        self.cfg
            .paths
            .zones
            .get(level)
            .cloned()
            .unwrap_or_else(|| self.synth_paths().zones)
    }

    fn layer_paths(&self) -> Vec<PathBuf> {
        self.cfg
            .paths
            .layers
            .clone()
            .unwrap_or_else(|| self.synth_paths().layers)
    }

    fn covariate_paths(&self) -> (PathBuf, PathBuf) {
        let s = self.synth_paths();
        (
            self.cfg.paths.covariates.clone().unwrap_or(s.covariates),
            self.cfg
                .paths
                .covariate_manifest
                .clone()
                .unwrap_or(s.covariate_manifest),
        )
    }

    fn holidays_path(&self) -> PathBuf {
        self.cfg
            .paths
            .holidays
            .clone()
            .unwrap_or_else(|| self.synth_paths().holidays)
    }

    fn graphs_path(&self, level: &str, scale: TimeScale) -> PathBuf {
        self.root
            .join("ingest")
            .join(format!("graphs_{level}_{}.json", scale.as_str()))
    }

    fn cell_dir(&self, c: &Cell) -> PathBuf {
        self.root.join("features").join(c.id())
    }

    fn cell_files(&self, c: &Cell) -> [PathBuf; 4] {
        let d = self.cell_dir(c);
        [
            d.join("matrix.csv"),
            d.join("matrix.json"),
            d.join("seasonal.json"),
            d.join("scaler.json"),
        ]
    }

    pub fn model_path(&self, c: &Cell, idx: usize) -> PathBuf {
        let name = self.cfg.models.grid[idx].name();
        self.root
            .join("models")
            .join(c.id())
            .join(format!("{idx:02}_{name}.json"))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.root.join("manifests").join(format!("{}.json", stage.name()))
    }

    fn explain_index(&self) -> usize {
        self.cfg
            .models
            .grid
            .iter()
            .position(|s| s.name() == self.cfg.explain.model)
            .expect("validated")
    }

    /// Files `stage` may read.
    pub fn declared_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let cells = self.cells();
        let levels = &self.cfg.features.levels;
        let scales = self.cfg.scales();
        let features = |v: &mut Vec<PathBuf>| {
            for c in &cells {
                v.extend(self.cell_files(c).into_iter().take(3));
            }
        };
        let mut v = Vec::new();
        match stage {
            Stage::Synth => {}
            Stage::Ingest => {
                v.push(self.trips_path());
                v.extend(levels.iter().map(|l| self.zones_path(l)));
            }
            Stage::Features => {
                for l in levels {
                    v.push(self.zones_path(l));
                    v.extend(scales.iter().map(|&s| self.graphs_path(l, s)));
                }
                v.extend(self.layer_paths());
                let (a, b) = self.covariate_paths();
                v.extend([a, b, self.holidays_path()]);
            }
            Stage::Train => features(&mut v),
            Stage::Evaluate => {
                features(&mut v);
                for c in &cells {
                    v.extend((0..self.cfg.models.grid.len()).map(|i| self.model_path(c, i)));
                }
            }
            Stage::Ablate => {
                features(&mut v);
                if self.cfg.ablation.model.is_none() {
                    v.push(self.report_path("benchmark.json"));
                }
            }
            Stage::Explain => {
                features(&mut v);
                let i = self.explain_index();
                v.extend(cells.iter().map(|c| self.model_path(c, i)));
            }
        }
        v.sort();
        v.dedup();
        v
    }

    fn enabled(&self, stage: Stage) -> bool {
        match stage {
            Stage::Ablate => self.cfg.ablation.enabled,
            Stage::Explain => self.cfg.explain.enabled,
            _ => true,
        }
    }

    fn up_to_date(&self, stage: Stage) -> bool {
        let Ok(bytes) = std::fs::read(self.manifest_path(stage)) else {
            return false;
        };
        let Ok(m) = serde_json::from_slice::<Manifest>(&bytes) else {
            return false;
        };
        if m.status != "ok" || m.config_hash != self.hash {
            return false;
        }
        let declared: BTreeMap<String, PathBuf> = self
            .declared_inputs(stage)
            .into_iter()
            .map(|p| {
                (
                    p.strip_prefix(&self.root)
                        .unwrap_or(&p)
                        .to_string_lossy()
                        .replace('\\', "/"),
                    p,
                )
            })
            .collect();
        let same = |key: &String, hash: &String, path: PathBuf| {
            std::fs::read(path).map(|b| &sha256_hex(&b) == hash).unwrap_or(false) && !key.is_empty()
        };
        m.inputs.len() == declared.len()
            && m.inputs
                .iter()
                .all(|(k, h)| declared.get(k).is_some_and(|p| same(k, h, p.clone())))
            && m.outputs.iter().all(|(k, h)| {
                let p = Path::new(k);
                let p = if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    self.root.join(p)
                };
                same(k, h, p)
            })
    }

    /// Runs one stage unless it is up to date (and `force` is off).
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        if !self.enabled(stage) {
            return Ok(StageOutcome {
                stage,
                status: StageStatus::Disabled,
                summary: None,
            });
        }
        let declared = self.declared_inputs(stage);
        if let Some(missing) = declared.iter().find(|p| !p.exists()) {
            return Err(Error::Dependency(missing.clone()));
        }
        if !self.force && self.up_to_date(stage) {
            log::info!("{}: up to date", stage.name());
            return Ok(StageOutcome {
                stage,
                status: StageStatus::UpToDate,
                summary: None,
            });
        }
        log::info!("{}: running", stage.name());
        let io = StageIo::new(stage, &self.root, declared);
        let started = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        let result = match stage {
            Stage::Synth => self.synth(&io),
            Stage::Ingest => self.ingest(&io),
            Stage::Features => self.features(&io),
            Stage::Train => self.train(&io),
            Stage::Evaluate => self.evaluate(&io),
            Stage::Ablate => self.ablate(&io),
            Stage::Explain => self.explain(&io),
        };
        let manifest = Manifest {
            stage: stage.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.hash.clone(),
            inputs: io.inputs(),
            outputs: io.outputs(),
            started,
            finished: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            status: if result.is_ok() { "ok" } else { "failed" }.to_string(),
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_bytes(&self.manifest_path(stage), json.as_bytes())?;
        result.map(|summary| StageOutcome {
            stage,
            status: StageStatus::Ran,
            summary,
        })
    }

    /// Every stage in order; synthesis only when some input needs it.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Synth && !self.uses_synth() {
                continue;
            }
            out.push(self.run(stage)?);
        }
        Ok(out)
    }

    fn synth(&self, io: &StageIo) -> Result<Option<String>> {
        let out = generate(&self.cfg.scenario())?;
        let paths = self.synth_paths();
        let data_dir = paths.trips.parent().expect("synth dir").to_path_buf();
        let truth_dir = paths.truth.parent().expect("truth dir").to_path_buf();
        let written = write_synth(&out, &data_dir, &truth_dir)?;
        for p in written.inputs().iter().chain([&written.truth]) {
            io.record_output(p)?;
        }
        log::info!("synth: {} trips over {} days", out.trips.len(), self.cfg.synth.n_days);
        Ok(None)
    }

    fn ingest(&self, io: &StageIo) -> Result<Option<String>> {
        let load = parse_trips(&io.read(&self.trips_path())?, &TripSchema::default())?;
        let (kept, report) = clean_trips(&load.records, &self.cfg.cleaning);
        let mut dropped = BTreeMap::new();
        for level in &self.cfg.features.levels {
            let part = self.partition(io, level)?;
            let assigned = AssignedTrips::assign(&kept, &part);
            for scale in self.cfg.scales() {
                let agg = aggregate_od(&assigned, scale);
                dropped.insert(level.clone(), agg.dropped_unassigned);
                io.write(
                    &self.graphs_path(level, scale),
                    &graphs_to_json(level, scale, &agg.graphs),
                )?;
            }
        }
        let summary = IngestSummary {
            rows_rejected: load.rejected.len(),
            cleaning: &report,
            dropped_unassigned: dropped,
        };
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        io.write(&self.root.join("ingest").join("cleaning.json"), json.as_bytes())?;
        log::info!(
            "ingest: {} rows, {} rejected, {} retained after cleaning",
            load.records.len() + load.rejected.len(),
            load.rejected.len(),
            report.retained
        );
        Ok(None)
    }

    fn partition(&self, io: &StageIo, level: &str) -> Result<SpatialPartition> {
        let part = parse_partition(&io.read(&self.zones_path(level))?, Some(level))?;
        if part.is_empty() {
            return Err(Error::Config(format!(
                "zone file for level `{level}` has no zones of that level"
            )));
        }
        Ok(part)
    }

    fn features(&self, io: &StageIo) -> Result<Option<String>> {
        let layers = self
            .layer_paths()
            .iter()
            .map(|p| SpatialLayer::from_json(&io.read(p)?))
            .collect::<Result<Vec<_>>>()?;
        let (cov_path, man_path) = self.covariate_paths();
        let manifest = parse_covariate_manifest(&io.read_string(&man_path)?)?;
        let covariates = parse_covariates(&io.read(&cov_path)?, &manifest)?;
        let holidays = parse_holidays(&io.read_string(&self.holidays_path())?)?;
        let opts = FeatureOptions {
            lags: self.cfg.features.lags.clone(),
            weekend: self.cfg.weekend()?,
            ..FeatureOptions::default()
        };
        let cutoff = self.cfg.cutoff_ts().expect("validated");
        for level in &self.cfg.features.levels {
            let part = self.partition(io, level)?;
            let table = spatial_table(&layers, &part)?;
            for scale in self.cfg.scales() {
                let cell = Cell {
                    scale,
                    level: level.clone(),
                };
                let graphs = graphs_from_json(&io.read(&self.graphs_path(level, scale))?)?;
                let c = CutoffSpec::aligned(cutoff, scale);
                let inputs = FeatureInputs {
                    level,
                    scale,
                    graphs: &graphs,
                    spatial: &table,
                    covariates: &covariates,
                    holidays: &holidays,
                    cutoff: c.cutoff,
                };
                let mut build = build_features(&inputs, &opts, None)?;
                let (n_train, n_test) = split(&mut build.matrix, &c)?;
                let scaler = fit_scaler(&build.matrix)?;
                let scaled = apply_scaler(&scaler, &build.matrix)?;
                let [csv, side, seasonal, scaler_path] = self.cell_files(&cell);
                let (csv_bytes, side_bytes) = encode_matrix(&scaled)?;
                io.write(&csv, &csv_bytes)?;
                io.write(&side, &side_bytes)?;
                io.write(&seasonal, &to_json(&build.seasonal))?;
                io.write(&scaler_path, &to_json(&scaler))?;
                log::info!(
                    "features {}: {} rows x {} columns ({n_train} train, {n_test} test)",
                    cell.id(),
                    scaled.nrows(),
                    scaled.ncols()
                );
            }
        }
        Ok(None)
    }

    fn load_cell(&self, io: &StageIo, c: &Cell) -> Result<CellData> {
        let [csv, side, seasonal, _] = self.cell_files(c);
        let matrix = parse_matrix(&io.read(&csv)?, &io.read(&side)?)?;
        let seasonal: SeasonalModel = serde_json::from_slice(&io.read(&seasonal)?)
            .map_err(|e| Error::ModelFormat(format!("seasonal model: {e}")))?;
        Ok(CellData { matrix, seasonal })
    }

    fn train(&self, io: &StageIo) -> Result<Option<String>> {
        let grid = &self.cfg.models.grid;
        for c in self.cells() {
            let data = self.load_cell(io, &c)?;
            let files: Vec<Vec<u8>> = grid
                .par_iter()
                .map(
                    |spec| match fit_model(spec, &data.matrix, &data.seasonal, self.cfg.seed) {
                        Ok(m) => model_to_json(&m).map(String::into_bytes),
                        Err(e) => {
                            log::warn!("train {}: {} failed: {e}", c.id(), spec.name());
                            Ok(serde_json::to_vec_pretty(&FailedModel {
                                format_version: MODEL_FORMAT_VERSION,
                                kind: spec.name(),
                                error: e.to_string(),
                            })
                            .expect("serializes"))
                        }
                    },
                )
                .collect::<Result<_>>()?;
            for (i, bytes) in files.iter().enumerate() {
                io.write(&self.model_path(&c, i), bytes)?;
            }
        }
        Ok(None)
    }

    fn evaluate(&self, io: &StageIo) -> Result<Option<String>> {
        let grid = &self.cfg.models.grid;
        let mut rows = Vec::new();
        for c in self.cells() {
            let data = self.load_cell(io, &c)?;
            let texts = (0..grid.len())
                .map(|i| io.read_string(&self.model_path(&c, i)))
                .collect::<Result<Vec<_>>>()?;
            let cell_rows: Vec<ReportRow> = grid
                .par_iter()
                .zip(texts.par_iter())
                .map(|(spec, text)| {
                    let outcome = load_fitted(text).and_then(|m| evaluate_model(&m, &data.matrix));
                    ReportRow::new(&data.matrix, "all", spec, outcome)
                })
                .collect();
            rows.extend(cell_rows);
        }
        let report = Report {
            kind: "benchmark".into(),
            config_hash: self.hash.clone(),
            rows,
        };
        self.write_report(io, &report, "benchmark")?;
        Ok(Some(report.to_table()))
    }

    fn write_report(&self, io: &StageIo, report: &Report, name: &str) -> Result<()> {
        io.write(&self.report_path(&format!("{name}.csv")), report.to_csv().as_bytes())?;
        io.write(&self.report_path(&format!("{name}.json")), report.to_json().as_bytes())
    }

    /// Grid index of the model to ablate for each cell.
    fn ablation_choice(&self, io: &StageIo) -> Result<Vec<usize>> {
        let grid = &self.cfg.models.grid;
        if let Some(name) = &self.cfg.ablation.model {
            let i = grid.iter().position(|s| s.name() == name).expect("validated");
            return Ok(vec![i; self.cells().len()]);
        }
        let bench: Report = serde_json::from_slice(&io.read(&self.report_path("benchmark.json"))?)
            .map_err(|e| Error::Manifest(format!("benchmark report: {e}")))?;
        if bench.rows.len() != self.cells().len() * grid.len() {
            return Err(Error::Manifest("benchmark report does not match the model grid".into()));
        }
        self.cells()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let cell_rows: Vec<ReportRow> = bench.rows[k * grid.len()..(k + 1) * grid.len()]
                    .iter()
                    .zip(grid)
                    .map(|(r, s)| {
                        let mut r = r.clone();
                        if !s.uses_features() {
                            r.metrics = None;
                        }
                        r
                    })
                    .collect();
                best_rows(&cell_rows)
                    .first()
                    .copied()
                    .ok_or_else(|| Error::Fit(format!("no feature model succeeded for {}", c.id())))
            })
            .collect()
    }

    fn ablate(&self, io: &StageIo) -> Result<Option<String>> {
        let choice = self.ablation_choice(io)?;
        let mut rows = Vec::new();
        for (c, &i) in self.cells().iter().zip(&choice) {
            let data = self.load_cell(io, c)?;
            let spec: &ModelSpec = &self.cfg.models.grid[i];
            rows.extend(run_ablation(&data.matrix, &data.seasonal, spec, self.cfg.seed, None)?);
        }
        let report = Report {
            kind: "ablation".into(),
            config_hash: self.hash.clone(),
            rows,
        };
        self.write_report(io, &report, "ablation")?;
        Ok(Some(report.to_table()))
    }

    fn explain(&self, io: &StageIo) -> Result<Option<String>> {
        let idx = self.explain_index();
        let mut summary = String::new();
        for c in self.cells() {
            let data = self.load_cell(io, &c)?;
            let model = load_fitted(&io.read_string(&self.model_path(&c, idx))?)?;
            let test = data.matrix.rows_in(Split::Test);
            let rows: Vec<usize> = sample_rows(test.len(), self.cfg.explain.shap_sample, self.cfg.seed)
                .into_iter()
                .map(|k| test[k])
                .collect();
            let rep = importance(&model, &data.matrix, &rows, self.cfg.explain.top_k)?;
            io.write(
                &self.report_path(&format!("shap_{}.json", c.id())),
                rep.to_json(&self.hash).as_bytes(),
            )?;
            io.write(
                &self.report_path(&format!("shap_top_{}.csv", c.id())),
                rep.top_k_csv(&self.hash).as_bytes(),
            )?;
            if self.cfg.explain.per_row {
                let sample = data.matrix.select_rows(&rows);
                let shap = explain_rows(&model, &Design::of(&sample))?;
                let all: Vec<usize> = (0..sample.nrows()).collect();
                io.write(
                    &self.report_path(&format!("shap_rows_{}.csv", c.id())),
                    shap_rows_csv(&sample, &all, &shap, &self.hash).as_bytes(),
                )?;
            }
            summary.push_str(&format!(
                "{} ({}): {}\n",
                c.id(),
                model.spec.name(),
                rep.top_k.join(", ")
            ));
        }
        Ok(Some(summary))
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializes");
    b.push(b'\n');
    b
}

fn load_fitted(text: &str) -> Result<crate::models::Model> {
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(text) {
        if let Some(e) = v.get("error").and_then(|e| e.as_str()) {
            return Err(Error::Fit(e.to_string()));
        }
    }
    model_from_json(text)
}
