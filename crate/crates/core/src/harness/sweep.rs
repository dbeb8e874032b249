use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ScenarioConfig;
use super::scenario::{run_scenario_with, ScenarioOptions};
use super::seeds::run_seed;
use crate::error::{Error, Result};

/// A named list of values for one config field.
///
/// Names are top-level config fields (`kappa`, `n_bar_F`), drive or detection
/// fields (`s`, `w`, `n_impulses`, `alpha`), or dotted paths (`drive.s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Parses `kappa=0.01,0.1,1;n_bar_F=1,5` or a JSON object of name → list.
pub fn parse_axes(text: &str) -> Result<Vec<SweepAxis>> {
    let text = text.trim();
    if text.starts_with('{') {
        let map: serde_json::Map<String, Value> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("axes: {e}")))?;
        return map
            .into_iter()
            .map(|(name, v)| {
                let values: Vec<f64> = serde_json::from_value(v)
                    .map_err(|e| Error::Config(format!("axis {name}: {e}")))?;
                SweepAxis::new(name, values)
            })
            .collect();
    }
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (name, list) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("axis `{part}` is not NAME=V1,V2,...")))?;
            let values = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("axis {name}: `{v}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            SweepAxis::new(name.trim().to_string(), values)
        })
        .collect()
}

impl SweepAxis {
    pub fn new(name: String, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation(format!("axis {name} has no values")));
        }
        Ok(Self { name, values })
    }
}

fn field_path(root: &Value, name: &str) -> Option<Vec<String>> {
    if name.contains('.') {
        return Some(name.split('.').map(str::to_string).collect());
    }
    if root.get(name).is_some() {
        return Some(vec![name.to_string()]);
    }
    ["drive", "detection"].into_iter().find_map(|group| {
        root.get(group)
            .and_then(|g| g.get(name))
            .map(|_| vec![group.to_string(), name.to_string()])
    })
}

/// Copy of `base` with each `(axis, value)` assignment applied.
pub fn apply_axes(base: &ScenarioConfig, assignments: &[(&str, f64)]) -> Result<ScenarioConfig> {
    let mut root = serde_json::to_value(base)?;
    for &(name, value) in assignments {
        let path = field_path(&root, name)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis `{name}`")))?;
        let mut slot = &mut root;
        for key in &path {
            slot = slot
                .get_mut(key)
                .ok_or_else(|| Error::Config(format!("unknown sweep axis `{name}`")))?;
        }
        *slot = if slot.is_u64() {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::validation(format!(
                    "{name} needs a whole number, got {value}"
                )));
            }
            Value::from(value as u64)
        } else {
            Value::from(value)
        };
    }
    let cfg: ScenarioConfig =
        serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// Pooled detection fraction and false-positive rate.
    Detection,
    /// Mean `d_F` and `d_S`.
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub runs: usize,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub metric: SweepMetric,
    /// Reuse the same per-run seeds in every cell.
    pub matched_seeds: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            runs: 20,
            workers: 0,
            metric: SweepMetric::Detection,
            matched_seeds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub coords: Vec<f64>,
    /// Successful runs.
    pub runs: usize,
    pub detection_fraction: Option<f64>,
    pub fpr: Option<f64>,
    pub mean_d_f: Option<f64>,
    pub mean_d_s: Option<f64>,
    /// First error met in this cell, if any run failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    pub metric: SweepMetric,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// `(metric name, value)` pairs for one cell, in a fixed order.
    pub fn cell_values(&self, cell: &SweepCell) -> Vec<(&'static str, Option<f64>)> {
        match self.metric {
            SweepMetric::Detection => vec![
                ("detection_fraction", cell.detection_fraction),
                ("fpr", cell.fpr),
            ],
            SweepMetric::Distance => vec![("d_F", cell.mean_d_f), ("d_S", cell.mean_d_s)],
        }
    }
}

/// Row-major coordinates of cell `index` (last axis fastest).
fn cell_coords(axes: &[SweepAxis], mut index: usize) -> Vec<f64> {
    let mut coords = vec![0.0; axes.len()];
    for (k, axis) in axes.iter().enumerate().rev() {
        coords[k] = axis.values[index % axis.values.len()];
        index /= axis.values.len();
    }
    coords
}

struct RunOutcome {
    matched: usize,
    truth: usize,
    false_positives: usize,
    detections: usize,
    d_f: f64,
    d_s: f64,
}

/// Runs `opts.runs` scenarios per grid cell and aggregates them.
///
/// Run `r` of cell `c` uses seed `run_seed(base.seed, c, r)`, so the result is
/// independent of worker count and scheduling. A failing run marks its cell
/// failed without stopping the sweep.
pub fn sweep_grid(
    base: &ScenarioConfig,
    axes: &[SweepAxis],
    opts: SweepOptions,
) -> Result<SweepResult> {
    if opts.runs == 0 {
        return Err(Error::validation("a sweep needs at least one run per cell"));
    }
    let n_cells: usize = axes.iter().map(|a| a.values.len()).product();
    let configs = (0..n_cells)
        .map(|c| {
            let coords = cell_coords(axes, c);
            let assignments: Vec<(&str, f64)> = axes
                .iter()
                .map(|a| a.name.as_str())
                .zip(coords.iter().copied())
                .collect();
            apply_axes(base, &assignments)
        })
        .collect::<Result<Vec<_>>>()?;
    if opts.metric == SweepMetric::Detection && configs.iter().any(|c| c.drive.n_impulses == 0) {
        return Err(Error::validation(
            "detection sweeps need at least one impulse per run",
        ));
    }

    let scenario_opts = ScenarioOptions {
        tv_metrics: opts.metric == SweepMetric::Distance,
        detection: opts.metric == SweepMetric::Detection,
        track_effect_covariance: false,
    };
    let job = |k: usize| -> Result<RunOutcome> {
        let (cell, run) = (k / opts.runs, k % opts.runs);
        let seed_cell = if opts.matched_seeds { 0 } else { cell as u64 };
        let cfg = ScenarioConfig {
            seed: run_seed(base.seed, seed_cell, run as u64),
            ..configs[cell].clone()
        };
        let out = run_scenario_with(&cfg, scenario_opts)?;
        let report = out.report.as_ref();
        Ok(RunOutcome {
            matched: report.map_or(0, |r| r.matches.len()),
            truth: report.map_or(0, |r| r.truth_ms.len()),
            false_positives: report.map_or(0, |r| r.false_positives),
            detections: report.map_or(0, |r| r.detected_ms.len()),
            d_f: out.d_f.unwrap_or(f64::NAN),
            d_s: out.d_s.unwrap_or(f64::NAN),
        })
    };
    let total = n_cells * opts.runs;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RunOutcome>> =
        pool.install(|| (0..total).into_par_iter().map(job).collect());

    let cells = outcomes
        .chunks(opts.runs)
        .enumerate()
        .map(|(c, chunk)| aggregate(cell_coords(axes, c), chunk, opts.metric))
        .collect();
    Ok(SweepResult {
        axes: axes.to_vec(),
        metric: opts.metric,
        cells,
    })
}

fn aggregate(coords: Vec<f64>, runs: &[Result<RunOutcome>], metric: SweepMetric) -> SweepCell {
    let failure = runs
        .iter()
        .find_map(|r| r.as_ref().err().map(|e| e.to_string()));
    let ok: Vec<&RunOutcome> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut cell = SweepCell {
        coords,
        runs: ok.len(),
        detection_fraction: None,
        fpr: None,
        mean_d_f: None,
        mean_d_s: None,
        failure,
    };
    if cell.failure.is_some() || ok.is_empty() {
        return cell;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    match metric {
        SweepMetric::Detection => {
            let sum = |f: fn(&RunOutcome) -> usize| ok.iter().map(|r| f(r)).sum::<usize>();
            cell.detection_fraction = Some(ratio(sum(|r| r.matched), sum(|r| r.truth)));
            cell.fpr = Some(ratio(sum(|r| r.false_positives), sum(|r| r.detections)));
        }
        SweepMetric::Distance => {
            let n = ok.len() as f64;
            cell.mean_d_f = Some(ok.iter().map(|r| r.d_f).sum::<f64>() / n);
            cell.mean_d_s = Some(ok.iter().map(|r| r.d_s).sum::<f64>() / n);
        }
    }
    cell
}
