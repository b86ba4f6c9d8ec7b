use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmflow_core::pipeline::{Pipeline, RunConfig, Stage, StageOutcome, StageStatus};
use mmflow_core::Error;

/// Micromobility OD demand forecasting pipeline.
#[derive(Parser)]
#[command(name = "mmflow", version, about)]
struct Cli {
    /// TOML config file; built-in defaults (the synthetic scenario) when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Rerun stages even when up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic city.
    Synth,
    /// Clean trips and aggregate flow graphs.
    Ingest,
    /// Build, split and scale feature matrices.
    Features,
    /// Fit the model grid.
    Train,
    /// Score the models on the test period.
    Evaluate,
    /// Feature-group ablation of the chosen model.
    Ablate,
    /// SHAP importance report.
    Explain,
    /// Every stage in order.
    RunAll,
}

fn stage_of(c: Command) -> Option<Stage> {
    Some(match c {
        Command::Synth => Stage::Synth,
        Command::Ingest => Stage::Ingest,
        Command::Features => Stage::Features,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Ablate => Stage::Ablate,
        Command::Explain => Stage::Explain,
        Command::RunAll => return None,
    })
}

fn report(o: &StageOutcome) {
    let status = match o.status {
        StageStatus::Ran => "done",
        StageStatus::UpToDate => "up to date",
        StageStatus::Disabled => "disabled",
    };
    eprintln!("{}: {status}", o.stage.name());
    if let Some(s) = &o.summary {
        print!("{s}");
    }
}

fn run(cli: &Cli) -> mmflow_core::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let p = Pipeline::new(cfg, cli.force)?;
    match stage_of(cli.command) {
        Some(stage) => report(&p.run(stage)?),
        None => {
            for o in p.run_all()? {
                report(&o);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Parameter(_) => 2,
                Error::Dependency(_) => 3,
                _ => 1,
            })
        }
    }
}
