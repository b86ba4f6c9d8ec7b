use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featgen::WeekendDays;
use crate::ingest::CleaningPolicy;
use crate::models::ModelSpec;
use crate::synth::CityScenario;
use crate::time::{parse_timestamp, TimeScale};

/// Input files. Any path left out falls back to the synthetic scenario's
/// output under `<output_dir>/synth`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub trips: Option<PathBuf>,
    /// Zone file per spatial level.
    pub zones: BTreeMap<String, PathBuf>,
    pub layers: Option<Vec<PathBuf>>,
    pub covariates: Option<PathBuf>,
    pub covariate_manifest: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub scales: Vec<String>,
    pub levels: Vec<String>,
    /// Date or timestamp; aligned down to each scale's bucket boundary.
    pub cutoff: String,
    pub lags: Vec<usize>,
    pub weekend: Vec<String>,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            scales: vec!["daily".into(), "monthly".into()],
            levels: vec!["quarters".into()],
            cutoff: "2022-11-01".into(),
            lags: vec![1, 7],
            weekend: vec!["fri".into(), "sat".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub grid: Vec<ModelSpec>,
}

/// Desk-scale grid: every family once, ensembles sized for a laptop.
pub fn default_grid() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Ols,
        ModelSpec::Ridge { lambda: 1.0 },
        ModelSpec::Lasso { lambda: 0.01 },
        ModelSpec::ElasticNet {
            lambda: 0.01,
            alpha: 0.5,
        },
        ModelSpec::Tree {
            max_depth: Some(10),
            min_samples_leaf: 5,
        },
        ModelSpec::Forest {
            n_trees: 100,
            max_depth: Some(12),
            min_samples_leaf: 5,
            feature_subsample: 1.0 / 3.0,
            bootstrap: true,
        },
        ModelSpec::Gbm {
            n_estimators: 300,
            learning_rate: 0.1,
            max_depth: Some(5),
            min_samples_leaf: 1,
        },
        ModelSpec::Knn { k: 5 },
        ModelSpec::SeasonalBaseline,
    ]
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { grid: default_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub enabled: bool,
    /// Model name from the grid; the best benchmark model when absent.
    pub model: Option<String>,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            enabled: true,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub enabled: bool,
    /// Model name from the grid to explain.
    pub model: String,
    pub shap_sample: usize,
    pub top_k: usize,
    /// Also write per-row attributions.
    pub per_row: bool,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            enabled: true,
            model: "gbm".into(),
            shap_sample: crate::explain::DEFAULT_SHAP_SAMPLE,
            top_k: 10,
            per_row: false,
        }
    }
}

/// Whole-pipeline configuration, one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; the scenario and every model draw from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub paths: InputPaths,
    pub cleaning: CleaningPolicy,
    pub features: FeatureSection,
    pub models: ModelSection,
    pub ablation: AblationSection,
    pub explain: ExplainSection,
    pub synth: CityScenario,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            paths: InputPaths::default(),
            cleaning: CleaningPolicy::default(),
            features: FeatureSection::default(),
            models: ModelSection::default(),
            ablation: AblationSection::default(),
            explain: ExplainSection::default(),
            synth: CityScenario::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let paths = &mut self.paths;
        paths.trips.iter_mut().for_each(fix);
        paths.zones.values_mut().for_each(fix);
        paths.layers.iter_mut().flatten().for_each(fix);
        paths.covariates.iter_mut().for_each(fix);
        paths.covariate_manifest.iter_mut().for_each(fix);
        paths.holidays.iter_mut().for_each(fix);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything that influences results; the output location is
    /// left out so the same run in two places reports the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn scales(&self) -> Vec<TimeScale> {
        self.features.scales.iter().filter_map(|s| s.parse().ok()).collect()
    }

    pub fn cutoff_ts(&self) -> Option<i64> {
        parse_timestamp(&self.features.cutoff)
    }

    pub fn weekend(&self) -> Result<WeekendDays> {
        WeekendDays::parse(&self.features.weekend)
    }

    /// The scenario actually generated: the root seed replaces its own.
    pub fn scenario(&self) -> CityScenario {
        CityScenario {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Every problem with the configuration.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let f = &self.features;
        if f.scales.is_empty() {
            out.push("features.scales must not be empty".into());
        }
        for s in &f.scales {
            if s.parse::<TimeScale>().is_err() {
                out.push(format!("features.scales: unknown scale `{s}`"));
            }
        }
        let mut uniq = f.scales.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != f.scales.len() {
            out.push("features.scales lists a scale twice".into());
        }
        if f.levels.is_empty() {
            out.push("features.levels must not be empty".into());
        }
        for l in &f.levels {
            if !self.paths.zones.contains_key(l) && *l != self.synth.level {
                out.push(format!("features.levels: no zone file for level `{l}` in paths.zones"));
            }
        }
        if self.cutoff_ts().is_none() {
            out.push(format!("features.cutoff: cannot parse `{}`", f.cutoff));
        }
        if f.lags.contains(&0) {
            out.push("features.lags must be positive".into());
        }
        if let Err(e) = self.weekend() {
            out.push(format!("features.weekend: {e}"));
        }
        if self.models.grid.is_empty() {
            out.push("models.grid must not be empty".into());
        }
        for spec in &self.models.grid {
            out.extend(spec.problems().into_iter().map(|p| format!("models.grid: {p}")));
        }
        let names: Vec<&str> = self.models.grid.iter().map(|s| s.name()).collect();
        if let Some(m) = &self.ablation.model {
            if !names.contains(&m.as_str()) {
                out.push(format!("ablation.model: `{m}` is not in models.grid"));
            }
        }
        if self.explain.enabled {
            if !names.contains(&self.explain.model.as_str()) {
                out.push(format!("explain.model: `{}` is not in models.grid", self.explain.model));
            }
            if self.explain.shap_sample == 0 {
                out.push("explain.shap_sample must be >= 1".into());
            }
        }
        if CleaningPolicy::new(self.cleaning.t_min_s, self.cleaning.t_max_s).is_err() {
            out.push("cleaning: need 0 <= t_min_s < t_max_s".into());
        }
        out.extend(self.scenario().problems());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} problem(s):\n  - {}",
                p.len(),
                p.join("\n  - ")
            )))
        }
    }
}
