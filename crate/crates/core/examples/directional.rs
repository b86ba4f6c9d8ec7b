//! Replicates the directional checks over a range of seeds on the default
//! scenario, daily scale: GBM vs the seasonal baseline, network+temporal vs
//! spatial+temporal GBM, and the rank of `previous_count` among SHAP
//! importances.
//!
//!     cargo run --release -p mmflow-core --example directional -- 42 61

use mmflow_core::eval::Report;
use mmflow_core::models::ModelSpec;
use mmflow_core::pipeline::{default_grid, Pipeline, RunConfig};

fn mae(r: &Report, features: &str, regressor: &str) -> f64 {
    r.rows
        .iter()
        .find(|x| x.featurestypes == features && x.regressor == regressor)
        .and_then(|x| x.metrics.as_ref())
        .map_or(f64::NAN, |m| m.mae)
}

fn main() -> mmflow_core::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (lo, hi) = match args[..] {
        [a, b] => (a, b),
        [a] => (a, a),
        _ => (42, 61),
    };
    println!("seed,gbm_mae,baseline_mae,gain,net_temporal_mae,spatial_temporal_mae,previous_count_rank");
    for seed in lo..=hi {
        let dir = tempfile::tempdir().expect("temp dir");
        let mut cfg = RunConfig {
            seed,
            output_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        cfg.features.scales = vec!["daily".into()];
        cfg.models.grid = default_grid()
            .into_iter()
            .filter(|s| matches!(s, ModelSpec::Gbm { .. } | ModelSpec::SeasonalBaseline))
            .collect();
        cfg.ablation.model = Some("gbm".into());
        let p = Pipeline::new(cfg, false)?;
        p.run_all()?;

        let read = |name: &str| std::fs::read(p.report_path(name)).expect("report written");
        let bench: Report = serde_json::from_slice(&read("benchmark.json")).expect("benchmark report");
        let abl: Report = serde_json::from_slice(&read("ablation.json")).expect("ablation report");
        let shap: serde_json::Value = serde_json::from_slice(&read("shap_daily_quarters.json")).expect("shap report");
        let rank = shap["top_k"]
            .as_array()
            .and_then(|v| v.iter().position(|f| f == "previous_count"))
            .map_or("-".to_string(), |i| (i + 1).to_string());
        let (g, b) = (mae(&bench, "all", "gbm"), mae(&bench, "all", "seasonal_baseline"));
        println!(
            "{seed},{g:.3},{b:.3},{:.3},{:.3},{:.3},{rank}",
            1.0 - g / b,
            mae(&abl, "network and temporal", "gbm"),
            mae(&abl, "spatial and temporal", "gbm"),
        );
    }
    Ok(())
}
