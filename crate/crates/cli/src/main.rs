use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsmooth::harness::{
    emit_artifacts, parse_axes, roc_over_runs, run_scenario, sorted_roc, sweep_grid, Results,
    ScenarioConfig, SweepMetric, SweepOptions,
};
use qsmooth::Error;

#[derive(Parser)]
#[command(
    name = "qsmooth",
    version,
    about = "Gaussian filtering, smoothing and impulse detection for a monitored oscillator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectories, record and detections.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo sweep over a grid of config values.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `name=v1,v2;name2=...` or a JSON object of name to list.
        #[arg(long)]
        axes: String,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Detection)]
        metric: MetricArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pooled ROC curve over seeded runs.
    Roc {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated threshold fractions.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
        )]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MetricArg {
    Detection,
    Distance,
}

fn load(config: Option<&PathBuf>) -> qsmooth::Result<ScenarioConfig> {
    match config {
        Some(path) => ScenarioConfig::load(path),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(cli: Cli) -> qsmooth::Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let result = run_scenario(&cfg)?;
            emit_artifacts(
                &Results {
                    config: Some(&cfg),
                    scenario: Some(&result),
                    ..Default::default()
                },
                &out,
            )?;
            if let Some(r) = &result.report {
                println!(
                    "{} steps, {} detections, tpr {:.3}, fpr {:.3}",
                    result.record.len(),
                    r.detected_ms.len(),
                    r.tpr,
                    r.fpr
                );
            }
        }
        Command::Sweep {
            config,
            axes,
            runs,
            workers,
            metric,
            out,
        } => {
            let cfg = load(config.as_ref())?;
            let axes = parse_axes(&axes)?;
            let metric = match metric {
                MetricArg::Detection => SweepMetric::Detection,
                MetricArg::Distance => SweepMetric::Distance,
            };
            let opts = SweepOptions {
                runs,
                workers,
                metric,
                matched_seeds: false,
            };
            let sweep = sweep_grid(&cfg, &axes, opts)?;
            emit_artifacts(
                &Results {
                    config: Some(&cfg),
                    sweep: Some(&sweep),
                    ..Default::default()
                },
                &out,
            )?;
            let failed = sweep.cells.iter().filter(|c| c.failure.is_some()).count();
            println!("{} cells, {failed} failed", sweep.cells.len());
        }
        Command::Roc {
            config,
            alphas,
            runs,
            out,
        } => {
            let cfg = load(config.as_ref())?;
            let points = sorted_roc(roc_over_runs(&cfg, &alphas, runs)?);
            emit_artifacts(
                &Results {
                    config: Some(&cfg),
                    roc: Some(&points),
                    ..Default::default()
                },
                &out,
            )?;
            for p in &points {
                println!("alpha {:.3}  fpr {:.3}  tpr {:.3}", p.alpha, p.fpr, p.tpr);
            }
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
