//! Scenario orchestration, Monte Carlo sweeps and artifact output.

mod artifacts;
mod config;
mod roc;
mod scenario;
mod seeds;
mod sweep;

pub use artifacts::{
    emit_artifacts, roc_csv, sweep_csv, trajectories_csv, FileEntry, Manifest, Results,
    TRAJECTORY_COLUMNS,
};
pub use config::{DriveConfig, Placement, ScenarioConfig};
pub use roc::{roc_over_runs, sorted_roc};
pub use scenario::{
    build_drive, mean_abs_second_difference, random_impulse_train, run_scenario, run_scenario_with,
    ScenarioOptions, ScenarioOutput,
};
pub use seeds::{mix_seed, run_seed};
pub use sweep::{
    apply_axes, parse_axes, sweep_grid, SweepAxis, SweepCell, SweepMetric, SweepOptions,
    SweepResult,
};
