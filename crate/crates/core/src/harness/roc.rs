use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::scenario::{run_scenario_with, ScenarioOptions};
use super::seeds::run_seed;
use crate::detection::{roc_counts, sort_roc, RocCounts, RocPoint};
use crate::error::{Error, Result};

/// Pooled ROC over `runs` seeded scenarios: counts from every run are summed
/// per threshold before forming rates. Points come back in `alphas` order.
pub fn roc_over_runs(base: &ScenarioConfig, alphas: &[f64], runs: usize) -> Result<Vec<RocPoint>> {
    if runs == 0 {
        return Err(Error::validation("ROC needs at least one run"));
    }
    if base.drive.n_impulses == 0 {
        return Err(Error::validation("ROC needs at least one impulse per run"));
    }
    let opts = ScenarioOptions {
        tv_metrics: false,
        detection: true,
        track_effect_covariance: false,
    };
    let per_run = (0..runs)
        .into_par_iter()
        .map(|r| {
            let cfg = ScenarioConfig {
                seed: run_seed(base.seed, 0, r as u64),
                ..base.clone()
            };
            let out = run_scenario_with(&cfg, opts)?;
            let trace = out.trace.expect("detection requested");
            roc_counts(
                &trace.processed,
                trace.t0,
                trace.dt,
                &out.drive.centers(),
                alphas,
                cfg.detection.merge_window(),
                cfg.match_tolerance(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = vec![RocCounts::default(); alphas.len()];
    for counts in &per_run {
        for (acc, c) in pooled.iter_mut().zip(counts) {
            acc.merge(c);
        }
    }
    Ok(alphas
        .iter()
        .zip(&pooled)
        .map(|(&alpha, c)| RocPoint {
            alpha,
            fpr: c.fpr(),
            tpr: c.tpr(),
        })
        .collect())
}

/// Same points sorted by false-positive rate, as plotted.
pub fn sorted_roc(mut points: Vec<RocPoint>) -> Vec<RocPoint> {
    sort_roc(&mut points);
    points
}
