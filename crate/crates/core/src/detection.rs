//! Impulse detection on smoothed position traces.
//!
//! The second derivative of `⟨x⟩_S` jumps at the edges of every square pulse.
//! A bipolar box kernel turns each jump into a triangular peak; peaks above a
//! fraction `α` of the largest one are reported as detections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Half-width of the kernel, ms.
    pub t_half: f64,
    /// Threshold as a fraction of the largest peak.
    pub alpha: f64,
    /// Match tolerance in ms; `None` means `max(w, 0.1)` for pulse width `w`.
    pub tolerance: Option<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            t_half: 0.03,
            alpha: 0.5,
            tolerance: None,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_half > 0.0) {
            return Err(Error::validation(format!(
                "t_half = {} must be > 0",
                self.t_half
            )));
        }
        check_alpha(self.alpha)?;
        if let Some(tol) = self.tolerance {
            if !(tol >= 0.0) {
                return Err(Error::validation(format!("tolerance = {tol} must be ≥ 0")));
            }
        }
        Ok(())
    }

    pub fn tolerance_for_width(&self, width: f64) -> f64 {
        self.tolerance.unwrap_or_else(|| width.max(0.1))
    }

    /// Peaks closer than this merge into the larger one.
    pub fn merge_window(&self) -> f64 {
        2.0 * self.t_half
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::validation(format!("α = {alpha} outside [0, 1]")))
    }
}

/// Second-order accurate first or second derivative; one-sided stencils at
/// the ends keep the output the same length as the input.
pub fn finite_difference(series: &[f64], dt: f64, order: u8) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 5 {
        return Err(Error::validation(format!(
            "finite differences need at least 5 samples, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::validation(format!("dt = {dt} must be positive")));
    }
    let x = series;
    let mut out = vec![0.0; n];
    match order {
        1 => {
            let h2 = 2.0 * dt;
            out[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / h2;
            for i in 1..n - 1 {
                out[i] = (x[i + 1] - x[i - 1]) / h2;
            }
            out[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / h2;
        }
        2 => {
            let h2 = dt * dt;
            out[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / h2;
            for i in 1..n - 1 {
                out[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / h2;
            }
            out[n - 1] = (2.0 * x[n - 1] - 5.0 * x[n - 2] + 4.0 * x[n - 3] - x[n - 4]) / h2;
        }
        _ => {
            return Err(Error::validation(format!(
                "derivative order must be 1 or 2, got {order}"
            )))
        }
    }
    Ok(out)
}

/// `+1` on `[0, t_half)`, `−1` on `[t_half, 2 t_half)`, `0` elsewhere.
pub fn kernel_phi(t: f64, t_half: f64) -> f64 {
    if (0.0..t_half).contains(&t) {
        1.0
    } else if (t_half..2.0 * t_half).contains(&t) {
        -1.0
    } else {
        0.0
    }
}

/// Kernel half-width in samples.
fn kernel_half_len(dt: f64, t_half: f64) -> Result<usize> {
    if !(dt > 0.0 && t_half > 0.0) {
        return Err(Error::validation("dt and t_half must be positive"));
    }
    let m = t_half / dt;
    let rounded = m.round();
    if rounded < 1.0 || (m - rounded).abs() > 1e-9 * m {
        return Err(Error::validation(format!(
            "t_half = {t_half} is not a whole number of steps dt = {dt}"
        )));
    }
    Ok(rounded as usize)
}

/// Convolves `signal` with the sampled kernel, scaled by `dt`.
///
/// The causal kernel spans `[0, 2 t_half)`; the output is shifted back by
/// `t_half − dt` so that a step whose first high sample is at index `k`
/// produces its peak at index `k`. Samples whose kernel window would run off
/// either end of the signal are set to zero rather than padded.
pub fn convolve_kernel(signal: &[f64], dt: f64, t_half: f64) -> Result<Vec<f64>> {
    let m = kernel_half_len(dt, t_half)?;
    let n = signal.len();
    let mut out = vec![0.0; n];
    if n < 2 * m {
        return Ok(out);
    }
    // out[i] reads signal[i − m ..= i + m − 1]
    for (i, slot) in out.iter_mut().enumerate().take(n - m + 1).skip(m) {
        let pos: f64 = signal[i..i + m].iter().sum();
        let neg: f64 = signal[i - m..i].iter().sum();
        *slot = dt * (pos - neg);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub magnitude: f64,
}

/// Interior local maxima of `|signal|`. A flat top counts once, at its middle.
pub fn local_maxima(signal: &[f64]) -> Vec<Peak> {
    let mag: Vec<f64> = signal.iter().map(|v| v.abs()).collect();
    let n = mag.len();
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        // extend over a plateau
        let mut j = i;
        while j + 1 < n && same(mag[j + 1], mag[i]) {
            j += 1;
        }
        if j + 1 < n && mag[i] > mag[i - 1] && mag[i] > mag[j + 1] && !same(mag[i], mag[i - 1]) {
            peaks.push(Peak {
                index: (i + j) / 2,
                magnitude: mag[i],
            });
        }
        i = j + 1;
    }
    peaks
}

/// Local maxima after merging those closer than `merge_window` (in samples of
/// `dt`) into the larger one. Independent of any threshold.
pub fn candidate_peaks(processed: &[f64], dt: f64, merge_window: f64) -> Vec<Peak> {
    let mut peaks = local_maxima(processed);
    peaks.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.index.cmp(&b.index))
    });
    let mut kept: Vec<Peak> = Vec::new();
    for p in peaks {
        let close = kept
            .iter()
            .any(|k| (k.index as f64 - p.index as f64).abs() * dt < merge_window);
        if !close {
            kept.push(p);
        }
    }
    kept.sort_by_key(|p| p.index);
    kept
}

/// Times of the merged peaks whose magnitude is at least `α·h`, with `h` the
/// largest peak. An all-zero signal gives no detections.
pub fn threshold_detect(
    processed: &[f64],
    t0: f64,
    dt: f64,
    alpha: f64,
    merge_window: f64,
) -> Result<Vec<f64>> {
    if processed.is_empty() {
        return Err(Error::validation("cannot detect peaks in an empty signal"));
    }
    check_alpha(alpha)?;
    let peaks = candidate_peaks(processed, dt, merge_window);
    Ok(select_peaks(&peaks, alpha)
        .map(|p| t0 + p.index as f64 * dt)
        .collect())
}

fn select_peaks(peaks: &[Peak], alpha: f64) -> impl Iterator<Item = &Peak> {
    let h = peaks.iter().map(|p| p.magnitude).fold(0.0, f64::max);
    peaks.iter().filter(move |p| p.magnitude >= alpha * h)
}

/// Outcome of matching detections against true impulse centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detected_ms: Vec<f64>,
    pub truth_ms: Vec<f64>,
    /// One-to-one `(detected, truth)` pairs.
    pub matches: Vec<(f64, f64)>,
    /// Detections near an already matched impulse (its other edge, say).
    pub duplicates: usize,
    /// Detections with no impulse within tolerance.
    pub false_positives: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub detection_fraction: f64,
    pub alpha: f64,
}

/// Greedy one-to-one matching in order of increasing `|Δt|`.
///
/// `tpr` is matched impulses over all impulses. `fpr` is detections that lie
/// within tolerance of no impulse, over all detections; a second detection of
/// an impulse that is already matched is counted as a duplicate instead.
pub fn match_detections(detected: &[f64], truth: &[f64], tolerance: f64) -> DetectionReport {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let gap = (d - t).abs();
            if gap <= tolerance {
                pairs.push((gap, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_used = vec![false; detected.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            matches.push((detected[i], truth[j]));
        }
    }
    matches.sort_by(|a, b| a.1.total_cmp(&b.1));

    let near_any = |d: f64| truth.iter().any(|t| (d - t).abs() <= tolerance);
    let unmatched = detected
        .iter()
        .zip(&det_used)
        .filter(|(_, used)| !**used)
        .map(|(d, _)| *d);
    let (mut duplicates, mut false_positives) = (0, 0);
    for d in unmatched {
        if near_any(d) {
            duplicates += 1;
        } else {
            false_positives += 1;
        }
    }

    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let tpr = ratio(matches.len(), truth.len());
    DetectionReport {
        detected_ms: detected.to_vec(),
        truth_ms: truth.to_vec(),
        matches,
        duplicates,
        false_positives,
        tpr,
        fpr: ratio(false_positives, detected.len()),
        detection_fraction: tpr,
        alpha: f64::NAN,
    }
}

/// Derivative, kernel and threshold applied to a position trace.
#[derive(Debug, Clone)]
pub struct ProcessedTrace {
    pub t0: f64,
    pub dt: f64,
    pub second_derivative: Vec<f64>,
    pub processed: Vec<f64>,
}

pub fn process_trace(x: &[f64], t0: f64, dt: f64, cfg: &DetectionConfig) -> Result<ProcessedTrace> {
    cfg.validate()?;
    let second_derivative = finite_difference(x, dt, 2)?;
    let processed = convolve_kernel(&second_derivative, dt, cfg.t_half)?;
    Ok(ProcessedTrace {
        t0,
        dt,
        second_derivative,
        processed,
    })
}

impl ProcessedTrace {
    pub fn detect(&self, alpha: f64, merge_window: f64) -> Result<Vec<f64>> {
        threshold_detect(&self.processed, self.t0, self.dt, alpha, merge_window)
    }
}

/// Runs the full detector on `x` and scores it against `truth`.
pub fn detect_impulses(
    x: &[f64],
    t0: f64,
    dt: f64,
    truth: &[f64],
    tolerance: f64,
    cfg: &DetectionConfig,
) -> Result<DetectionReport> {
    let trace = process_trace(x, t0, dt, cfg)?;
    let detected = trace.detect(cfg.alpha, cfg.merge_window())?;
    let mut report = match_detections(&detected, truth, tolerance);
    report.alpha = cfg.alpha;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub alpha: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Counts behind one ROC point; sums over runs give pooled rates.
///
/// ROC rates are the classical ones: `tpr` is matched impulses over all
/// impulses, `fpr` is false detections over `negatives`, the false candidates
/// present when every peak is accepted (`α = 0`). Unlike the report's `fpr`,
/// this has a fixed denominator, so it can only fall as `α` rises.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RocCounts {
    pub matched: usize,
    pub truth: usize,
    pub false_positives: usize,
    pub negatives: usize,
    pub detections: usize,
}

impl RocCounts {
    pub fn merge(&mut self, other: &RocCounts) {
        self.matched += other.matched;
        self.truth += other.truth;
        self.false_positives += other.false_positives;
        self.negatives += other.negatives;
        self.detections += other.detections;
    }

    pub fn tpr(&self) -> f64 {
        if self.truth == 0 {
            0.0
        } else {
            self.matched as f64 / self.truth as f64
        }
    }

    pub fn fpr(&self) -> f64 {
        if self.negatives == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.negatives as f64
        }
    }
}

/// Per-α counts for one processed signal.
pub fn roc_counts(
    processed: &[f64],
    t0: f64,
    dt: f64,
    truth: &[f64],
    alphas: &[f64],
    merge_window: f64,
    tolerance: f64,
) -> Result<Vec<RocCounts>> {
    if processed.is_empty() {
        return Err(Error::validation(
            "cannot build an ROC from an empty signal",
        ));
    }
    let peaks = candidate_peaks(processed, dt, merge_window);
    let time = |p: &Peak| t0 + p.index as f64 * dt;
    let all: Vec<f64> = peaks.iter().map(time).collect();
    let negatives = match_detections(&all, truth, tolerance).false_positives;
    alphas
        .iter()
        .map(|&alpha| {
            check_alpha(alpha)?;
            let detected: Vec<f64> = select_peaks(&peaks, alpha).map(time).collect();
            let report = match_detections(&detected, truth, tolerance);
            Ok(RocCounts {
                matched: report.matches.len(),
                truth: truth.len(),
                false_positives: report.false_positives,
                negatives,
                detections: detected.len(),
            })
        })
        .collect()
}

/// Sorts points by `fpr`, then `tpr`.
pub fn sort_roc(points: &mut [RocPoint]) {
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
}

/// Classical ROC points per threshold fraction, sorted by `fpr`.
pub fn roc_curve(
    processed: &[f64],
    t0: f64,
    dt: f64,
    truth: &[f64],
    alphas: &[f64],
    merge_window: f64,
    tolerance: f64,
) -> Result<Vec<RocPoint>> {
    let counts = roc_counts(processed, t0, dt, truth, alphas, merge_window, tolerance)?;
    let mut points: Vec<RocPoint> = alphas
        .iter()
        .zip(&counts)
        .map(|(&alpha, c)| RocPoint {
            alpha,
            fpr: c.fpr(),
            tpr: c.tpr(),
        })
        .collect();
    sort_roc(&mut points);
    Ok(points)
}

/// Accepts each candidate peak with probability `accept_prob`, ignoring its
/// height. `is_true[i]` says whether candidate `i` sits on a real impulse.
/// Returns classical `(fpr, tpr)` rates over the candidate set.
pub fn random_decision_baseline<R: Rng>(
    is_true: &[bool],
    accept_prob: f64,
    rng: &mut R,
) -> (f64, f64) {
    let (mut tp, mut fp) = (0usize, 0usize);
    for &t in is_true {
        if rng.random::<f64>() < accept_prob {
            if t {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let pos = is_true.iter().filter(|&&t| t).count();
    let neg = is_true.len() - pos;
    let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    (rate(fp, neg), rate(tp, pos))
}
