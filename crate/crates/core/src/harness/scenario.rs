use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Placement, ScenarioConfig};
use super::seeds::{mix_seed, DRIVE_STREAM, NOISE_STREAM};
use crate::detection::{process_trace, DetectionReport, ProcessedTrace};
use crate::error::{Error, Result};
use crate::model::{thermal_state, DriveSignal, Impulse, LinearGaussianModel};
use crate::record::MeasurementRecord;
use crate::sde::{
    run_backward, run_forward_filter, simulate_reference, BackwardOptions, TrajectoryBundle,
};
use crate::smoothing::{
    combine_gaussians, tv_distance_timeseries, MarginalSeries, SmoothedEstimate, XGrid,
};

const MAX_REJECTIONS: usize = 10_000;

/// `n` pulses of height `s` and width `w` with centres uniform in
/// `[t0 + 2w, t1 − 2w]` and at least `2w` apart.
pub fn random_impulse_train<R: Rng>(
    n: usize,
    s: f64,
    w: f64,
    window: (f64, f64),
    rng: &mut R,
) -> Result<DriveSignal> {
    if n == 0 {
        return Ok(DriveSignal::zero());
    }
    let (lo, hi) = (window.0 + 2.0 * w, window.1 - 2.0 * w);
    if !(hi >= lo) {
        return Err(Error::Config(format!(
            "window [{}, {}] too short for pulses of width {w}",
            window.0, window.1
        )));
    }
    let sep = 2.0 * w;
    // Whole-train rejection keeps the draw uniform over valid placements.
    let mut centres: Vec<f64> = Vec::with_capacity(n);
    for attempt in 0.. {
        if attempt == MAX_REJECTIONS {
            return Err(Error::Config(format!(
                "could not place {n} pulses {sep} ms apart in [{lo}, {hi}]"
            )));
        }
        centres.clear();
        centres.extend((0..n).map(|_| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        }));
        centres.sort_by(f64::total_cmp);
        if centres.windows(2).all(|p| p[1] - p[0] >= sep) {
            break;
        }
    }
    DriveSignal::new(
        centres
            .into_iter()
            .map(|center| Impulse {
                center,
                width: w,
                height: s,
            })
            .collect(),
    )
}

/// Which of the optional, costlier outputs to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioOptions {
    pub tv_metrics: bool,
    pub detection: bool,
    pub track_effect_covariance: bool,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            tv_metrics: true,
            detection: true,
            track_effect_covariance: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub drive: DriveSignal,
    pub record: MeasurementRecord,
    pub bundle: TrajectoryBundle,
    pub smoothed: Vec<SmoothedEstimate>,
    pub trace: Option<ProcessedTrace>,
    pub report: Option<DetectionReport>,
    /// Summed position TV distance of the filter from the reference.
    pub d_f: Option<f64>,
    /// Same for the smoothed estimate.
    pub d_s: Option<f64>,
}

impl ScenarioOutput {
    pub fn x_reference(&self) -> Vec<f64> {
        self.bundle.reference.iter().map(|s| s.mean[0]).collect()
    }

    pub fn x_forward(&self) -> Vec<f64> {
        self.bundle.forward.iter().map(|s| s.mean[0]).collect()
    }

    pub fn x_smoothed(&self) -> Vec<f64> {
        self.smoothed.iter().map(SmoothedEstimate::x_mean).collect()
    }
}

pub fn build_drive(cfg: &ScenarioConfig) -> Result<DriveSignal> {
    let d = &cfg.drive;
    match &d.placement {
        Placement::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, DRIVE_STREAM));
            random_impulse_train(d.n_impulses, d.s, d.w, (0.0, cfg.t1), &mut rng)
        }
        Placement::Fixed(centres) => DriveSignal::new(
            centres
                .iter()
                .map(|&center| Impulse {
                    center,
                    width: d.w,
                    height: d.s,
                })
                .collect(),
        ),
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    run_scenario_with(cfg, ScenarioOptions::default())
}

/// Reference → record → filter and backward effect → smoothed estimate, then
/// detection on the smoothed position and TV distances to the reference.
///
/// With `known_drive` unset only the reference feels the drive.
pub fn run_scenario_with(cfg: &ScenarioConfig, opts: ScenarioOptions) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let model = LinearGaussianModel::oscillator(cfg.omega_a, cfg.kappa, cfg.eta)?;
    let drive = build_drive(cfg)?;
    let init_r = thermal_state(cfg.n_bar_r, 1)?;
    let init_f = thermal_state(cfg.n_bar_f, 1)?;

    let (reference, record) = simulate_reference(
        &model,
        &init_r,
        &drive,
        cfg.dt,
        cfg.t1,
        mix_seed(cfg.seed, NOISE_STREAM),
    )?;
    let assumed = if cfg.known_drive {
        drive.clone()
    } else {
        DriveSignal::zero()
    };
    let forward = run_forward_filter(&model, &init_f, &assumed, &record)?;
    let backward = run_backward(
        &model,
        &assumed,
        &record,
        BackwardOptions {
            nu: cfg.nu,
            track_covariance: opts.track_effect_covariance,
        },
    )?;
    let smoothed = forward
        .iter()
        .zip(&backward)
        .map(|(f, b)| combine_gaussians(f, b))
        .collect::<Result<Vec<_>>>()?;
    let bundle = TrajectoryBundle::new(record.grid(), reference, forward, backward)?;

    let (d_f, d_s) = if opts.tv_metrics {
        let grid = XGrid::default();
        let r = MarginalSeries::new(&bundle.times, &bundle.reference)?;
        let f = MarginalSeries::new(&bundle.times, &bundle.forward)?;
        let s = MarginalSeries::new(&bundle.times, &smoothed)?;
        (
            Some(tv_distance_timeseries(&f, &r, &grid)?),
            Some(tv_distance_timeseries(&s, &r, &grid)?),
        )
    } else {
        (None, None)
    };

    let (trace, report) = if opts.detection {
        let x_s: Vec<f64> = smoothed.iter().map(SmoothedEstimate::x_mean).collect();
        let trace = process_trace(&x_s, record.t0, record.dt, &cfg.detection)?;
        let detected = trace.detect(cfg.detection.alpha, cfg.detection.merge_window())?;
        let mut report =
            crate::detection::match_detections(&detected, &drive.centers(), cfg.match_tolerance());
        report.alpha = cfg.detection.alpha;
        (Some(trace), Some(report))
    } else {
        (None, None)
    };

    Ok(ScenarioOutput {
        config: cfg.clone(),
        drive,
        record,
        bundle,
        smoothed,
        trace,
        report,
        d_f,
        d_s,
    })
}

/// Mean of `|x[i+1] − 2x[i] + x[i−1]|`.
pub fn mean_abs_second_difference(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let total: f64 = x.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).sum();
    total / (x.len() - 2) as f64
}
