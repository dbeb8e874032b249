//! Fixed-step propagation of the reference system, the forward filter and the
//! backward effect.
//!
//! Means are stepped with Euler–Maruyama; the noise-free Riccati equations for
//! `V`, `U` and `P` use RK4. Backward quantities are indexed by the grid point
//! they live on: the step from `t_{i+1}` to `t_i` consumes record element `i`,
//! the same element the forward pass used to go from `t_i` to `t_{i+1}`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, rk4_step};
use crate::model::{DriveSignal, EffectState, GaussianState, LinearGaussianModel};
use crate::record::MeasurementRecord;

/// Default terminal effect covariance scale.
pub const DEFAULT_NU: f64 = 1e6;

/// `dV/dt = AV + VAᵀ + D − η(VCᵀ+Γᵀ)(CV+Γ)`.
pub fn covariance_rate(model: &LinearGaussianModel, v: &DMatrix<f64>) -> DMatrix<f64> {
    let a = model.a();
    let gain = v * model.c().transpose() + model.gamma().transpose();
    a * v + v * a.transpose() + model.d() - (&gain * gain.transpose()) * model.eta()
}

/// Rate of the effect covariance per backward step:
/// `U_{t−dt} = U_t + dt·(−AU − UAᵀ + D − η(UCᵀ−Γᵀ)(CU−Γ))`.
pub fn effect_covariance_rate(model: &LinearGaussianModel, u: &DMatrix<f64>) -> DMatrix<f64> {
    let a = model.a();
    let gain = u * model.c().transpose() - model.gamma().transpose();
    -(a * u) - u * a.transpose() + model.d() - (&gain * gain.transpose()) * model.eta()
}

/// Rate of the information matrix per backward step:
/// `PA + AᵀP − PDP + η(Cᵀ − PΓᵀ)(C − ΓP)`.
pub fn information_rate(model: &LinearGaussianModel, p: &DMatrix<f64>) -> DMatrix<f64> {
    let a = model.a();
    let src = model.c().transpose() - p * model.gamma().transpose();
    p * a + a.transpose() * p - p * model.d() * p + (&src * src.transpose()) * model.eta()
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("dt = {dt} must be positive")))
    }
}

/// Advances a conditioned state by one step given the Wiener increment `dw`.
pub fn forward_step(
    state: &GaussianState,
    model: &LinearGaussianModel,
    u: f64,
    dw: f64,
    dt: f64,
) -> Result<GaussianState> {
    check_dt(dt)?;
    let v = &state.cov;
    let drift = model.a() * &state.mean + model.drive_term(u);
    let gain = v * model.c().transpose() + model.gamma().transpose();
    let mean = &state.mean + drift * dt + gain.column(0) * (model.eta().sqrt() * dw);
    let cov = rk4_step(v, dt, |m| covariance_rate(model, m));
    let cov = linalg::checked_covariance(cov, "state covariance")?;
    Ok(GaussianState { mean, cov })
}

/// Effect mean and covariance `(Y, U)` in covariance form.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Steps `(Y, U)` from `t` back to `t − dt`:
/// `Y_{t−dt} = Y_t − (AY_t + Bu) dt + √η(U_tCᵀ − Γᵀ) dW`.
///
/// Explicit in `U`, so it needs `dt·‖C‖²‖U‖ ≪ 1`; [`run_backward`] uses the
/// information form instead and only substeps `U` for diagnostics.
pub fn backward_effect_step(
    effect: &EffectMoments,
    model: &LinearGaussianModel,
    u: f64,
    dw: f64,
    dt: f64,
) -> Result<EffectMoments> {
    check_dt(dt)?;
    let cov = &effect.cov;
    let drift = model.a() * &effect.mean + model.drive_term(u);
    let gain = cov * model.c().transpose() - model.gamma().transpose();
    let mean = &effect.mean - drift * dt + gain.column(0) * (model.eta().sqrt() * dw);
    let cov = rk4_step(cov, dt, |m| effect_covariance_rate(model, m));
    let cov = linalg::checked_covariance(cov, "effect covariance")?;
    Ok(EffectMoments { mean, cov })
}

/// One RK4 step of the information matrix from `t` back to `t − dt`.
pub fn backward_information_step(
    p: &DMatrix<f64>,
    model: &LinearGaussianModel,
    dt: f64,
) -> Result<DMatrix<f64>> {
    check_dt(dt)?;
    let next = rk4_step(p, dt, |m| information_rate(model, m));
    linalg::project_psd(next, "information matrix")
}

/// Steps the information vector `z = PY` from `t` back to `t − dt`.
///
/// This is the innovation-driven `Y` equation rewritten for `z`, which stays
/// finite at the terminal condition `z_T = 0`:
/// `dz = [Aᵀz − PDz − η(Cᵀ−PΓᵀ)Γz − PBu] dt + √η(Cᵀ − PΓᵀ) dy`
/// where `dy = √(8κ) dI` is the unnormalised record increment.
pub fn backward_information_mean_step(
    z: &DVector<f64>,
    p: &DMatrix<f64>,
    model: &LinearGaussianModel,
    u: f64,
    di: f64,
    dt: f64,
) -> DVector<f64> {
    let eta = model.eta();
    let src = model.c().transpose() - p * model.gamma().transpose();
    let gz = (model.gamma() * z)[0];
    let drift = model.a().transpose() * z
        - p * model.d() * z
        - src.column(0) * (eta * gz)
        - p * model.drive_term(u);
    let dy = (8.0 * model.measurement_rate()).sqrt() * di;
    z + drift * dt + src.column(0) * (eta.sqrt() * dy)
}

/// Normalised innovation `(dI − x̂ dt)·√(8κ)`.
pub fn innovation(di: f64, x_pred: f64, dt: f64, kappa: f64) -> f64 {
    (di - x_pred * dt) * (8.0 * kappa).sqrt()
}

/// Current increment `dI = r dt + dW/√(8κ)` for readout `r`.
pub fn current_increment(readout: f64, dw: f64, dt: f64, kappa: f64) -> f64 {
    readout * dt + dw / (8.0 * kappa).sqrt()
}

/// Number of steps covering `[0, t1]` at spacing `dt`.
pub fn step_count(t1: f64, dt: f64) -> Result<usize> {
    check_dt(dt)?;
    if !(t1 >= 0.0) || !t1.is_finite() {
        return Err(Error::validation(format!("t1 = {t1} must be ≥ 0")));
    }
    let n = (t1 / dt).round();
    if ((n * dt) - t1).abs() > 1e-9 * t1.max(1.0) {
        return Err(Error::validation(format!(
            "dt = {dt} does not divide the window length {t1}"
        )));
    }
    Ok(n as usize)
}

/// Simulates the reference system on `[0, t1]` and the current it emits.
///
/// Returns the state at every grid point (`N + 1` of them) and the record.
pub fn simulate_reference(
    model: &LinearGaussianModel,
    init: &GaussianState,
    drive: &DriveSignal,
    dt: f64,
    t1: f64,
    rng_seed: u64,
) -> Result<(Vec<GaussianState>, MeasurementRecord)> {
    let kappa = model.measurement_rate();
    if !(kappa > 0.0) {
        return Err(Error::validation(
            "reference simulation needs a monitored system (κ > 0)",
        ));
    }
    let n = step_count(t1, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sqrt_dt = dt.sqrt();
    let u = drive.sample_steps(0.0, dt, n);

    let mut states = Vec::with_capacity(n + 1);
    let mut di = Vec::with_capacity(n);
    let mut dw_true = Vec::with_capacity(n);
    let mut state = init.clone();
    for &ui in &u {
        let z: f64 = StandardNormal.sample(&mut rng);
        let dw = z * sqrt_dt;
        di.push(current_increment(model.readout(&state.mean), dw, dt, kappa));
        dw_true.push(dw);
        let next = forward_step(&state, model, ui, dw, dt)?;
        states.push(std::mem::replace(&mut state, next));
    }
    states.push(state);
    let record = MeasurementRecord::new(0.0, dt, di, Some(dw_true))?;
    Ok((states, record))
}

/// Runs the forward filter over a record; returns `N + 1` states.
pub fn run_forward_filter(
    model: &LinearGaussianModel,
    init: &GaussianState,
    drive: &DriveSignal,
    record: &MeasurementRecord,
) -> Result<Vec<GaussianState>> {
    let kappa = model.measurement_rate();
    let dt = record.dt;
    let u = drive.sample_steps(record.t0, dt, record.len());
    let mut states = Vec::with_capacity(record.len() + 1);
    let mut state = init.clone();
    for (&di, &ui) in record.di.iter().zip(&u) {
        let dw = if kappa > 0.0 {
            innovation(di, model.readout(&state.mean), dt, kappa)
        } else {
            0.0
        };
        let next = forward_step(&state, model, ui, dw, dt)?;
        states.push(std::mem::replace(&mut state, next));
    }
    states.push(state);
    Ok(states)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    /// Terminal scale for the `U_T = ν I` approximation.
    pub nu: f64,
    /// Also propagate `U` from `U_T = ν I` (diagnostics only).
    pub track_covariance: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            track_covariance: false,
        }
    }
}

/// RK4 for `U` over one backward step with enough substeps to stay stable
/// while `U` is still of order ν.
fn substepped_effect_covariance(
    model: &LinearGaussianModel,
    u: &DMatrix<f64>,
    dt: f64,
) -> DMatrix<f64> {
    const MAX_STIFF_STEP: f64 = 0.02;
    let a_norm = model.a().norm();
    let c_norm = model.c().norm();
    let mut cov = u.clone();
    let mut remaining = dt;
    while remaining > 0.0 {
        let gain = &cov * model.c().transpose() - model.gamma().transpose();
        let stiffness = 2.0 * a_norm + 2.0 * model.eta() * c_norm * gain.norm();
        let h = (MAX_STIFF_STEP / stiffness).min(remaining);
        cov = rk4_step(&cov, h, |m| effect_covariance_rate(model, m));
        remaining -= h;
        if remaining < 1e-15 * dt {
            break;
        }
    }
    linalg::symmetrize(&cov)
}

/// Runs the backward effect from `t1` (identity effect) to `t0`.
///
/// Returns `N + 1` effects; entry `i` conditions on record elements `i..N`.
pub fn run_backward(
    model: &LinearGaussianModel,
    drive: &DriveSignal,
    record: &MeasurementRecord,
    opts: BackwardOptions,
) -> Result<Vec<EffectState>> {
    if !(opts.nu > 0.0) {
        return Err(Error::validation(format!(
            "ν = {} must be positive",
            opts.nu
        )));
    }
    let dim = model.dim();
    let dt = record.dt;
    let n = record.len();
    let u = drive.sample_steps(record.t0, dt, n);

    let mut p = DMatrix::zeros(dim, dim);
    let mut z = DVector::zeros(dim);
    let mut cov = opts
        .track_covariance
        .then(|| DMatrix::identity(dim, dim) * opts.nu);

    let mut out = Vec::with_capacity(n + 1);
    let terminal = |p: &DMatrix<f64>, z: &DVector<f64>, cov: &Option<DMatrix<f64>>| {
        let mut e = EffectState::from_information(p.clone(), z.clone(), opts.nu);
        e.cov_approx = cov.clone();
        e
    };
    out.push(terminal(&p, &z, &cov));
    for i in (0..n).rev() {
        let z_next = backward_information_mean_step(&z, &p, model, u[i], record.di[i], dt);
        let p_next = backward_information_step(&p, model, dt)?;
        if let Some(c) = cov.as_mut() {
            *c = substepped_effect_covariance(model, c, dt);
        }
        z = z_next;
        p = p_next;
        out.push(terminal(&p, &z, &cov));
    }
    out.reverse();
    Ok(out)
}

/// Forward-time trajectories of the reference, filter and backward effect on
/// one shared grid.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    pub reference: Vec<GaussianState>,
    pub forward: Vec<GaussianState>,
    pub backward: Vec<EffectState>,
}

impl TrajectoryBundle {
    pub fn new(
        times: Vec<f64>,
        reference: Vec<GaussianState>,
        forward: Vec<GaussianState>,
        backward: Vec<EffectState>,
    ) -> Result<Self> {
        let n = times.len();
        if reference.len() != n || forward.len() != n || backward.len() != n {
            return Err(Error::validation(format!(
                "trajectory lengths differ: grid {n}, R {}, F {}, B {}",
                reference.len(),
                forward.len(),
                backward.len()
            )));
        }
        Ok(Self {
            times,
            reference,
            forward,
            backward,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{symplectic_form, thermal_state, Impulse};
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn rotation_model(kappa: f64) -> LinearGaussianModel {
        // G = I gives A = Ω.
        LinearGaussianModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_column_slice(2, 1, &[0.0, -1.0]),
            DMatrix::from_row_slice(
                1,
                2,
                &[
                    Complex::new((2.0 * kappa).sqrt(), 0.0),
                    Complex::new(0.0, 0.0),
                ],
            ),
            1.0,
        )
        .unwrap()
    }

    fn app(kappa: f64) -> LinearGaussianModel {
        LinearGaussianModel::oscillator(10.0, kappa, 1.0).unwrap()
    }

    #[test]
    fn forward_mean_drift() {
        let m = rotation_model(0.0);
        assert_eq!(m.a(), &symplectic_form(1).unwrap());
        let s = GaussianState::new(
            DVector::from_row_slice(&[1.0, 0.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let next = forward_step(&s, &m, 0.0, 0.0, 0.01).unwrap();
        assert_relative_eq!(next.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(next.mean[1], -0.01, epsilon = 1e-15);
    }

    #[test]
    fn covariance_rate_example() {
        let m = rotation_model(0.5);
        let rate = covariance_rate(&m, &DMatrix::identity(2, 2));
        assert_relative_eq!(
            rate,
            DMatrix::from_row_slice(2, 2, &[-4.0, 0.0, 0.0, 1.0]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn unmonitored_covariance_is_lyapunov() {
        let m = rotation_model(0.0);
        let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let a = m.a();
        assert_eq!(covariance_rate(&m, &v), a * &v + &v * a.transpose());
    }

    #[test]
    fn forward_step_rejects_bad_dt() {
        let s = thermal_state(0.0, 1).unwrap();
        assert!(forward_step(&s, &app(0.1), 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn forward_step_reports_instability() {
        // A huge step on a strongly measured system overshoots the Riccati flow.
        let s = thermal_state(50.0, 1).unwrap();
        let err = forward_step(&s, &app(50.0), 0.0, 0.0, 1.0).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }

    #[test]
    fn backward_effect_mean_drift() {
        let m = rotation_model(0.0);
        let e = EffectMoments {
            mean: DVector::from_row_slice(&[1.0, 0.0]),
            cov: DMatrix::zeros(2, 2),
        };
        let prev = backward_effect_step(&e, &m, 0.0, 0.0, 0.01).unwrap();
        assert_relative_eq!(prev.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(prev.mean[1], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn backward_effect_zero_cov_injects_diffusion() {
        let m = app(0.3);
        let e = EffectMoments {
            mean: DVector::zeros(2),
            cov: DMatrix::zeros(2, 2),
        };
        let dt = 1e-3;
        let prev = backward_effect_step(&e, &m, 0.0, 0.0, dt).unwrap();
        // RK4 of a flow starting at zero picks up O(dt²) corrections.
        assert_relative_eq!(
            prev.cov,
            m.d() * dt,
            epsilon = 2.0 * m.a().norm() * m.d().norm() * dt * dt
        );
        assert_relative_eq!(
            effect_covariance_rate(&m, &DMatrix::zeros(2, 2)),
            m.d().clone()
        );
    }

    #[test]
    fn backward_effect_linear_in_noise() {
        let m = app(0.1);
        let e = EffectMoments {
            mean: DVector::from_row_slice(&[0.5, -0.2]),
            cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]),
        };
        let base = backward_effect_step(&e, &m, 0.0, 0.0, 1e-3).unwrap().mean;
        let one = backward_effect_step(&e, &m, 0.0, 0.01, 1e-3).unwrap().mean;
        let two = backward_effect_step(&e, &m, 0.0, 0.02, 1e-3).unwrap().mean;
        assert_relative_eq!(&two - &base, (&one - &base) * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn information_first_step() {
        let m = app(0.1);
        assert_relative_eq!(
            information_rate(&m, &DMatrix::zeros(2, 2)),
            DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.0]),
            epsilon = 1e-14
        );
        let dt = 1e-3;
        let p = backward_information_step(&DMatrix::zeros(2, 2), &m, dt).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.8 * dt, max_relative = 1e-4);
        assert!(p[(1, 1)].abs() < 1e-5 * dt);
    }

    #[test]
    fn information_stays_zero_without_measurement() {
        let m = LinearGaussianModel::oscillator(10.0, 0.0, 0.0).unwrap();
        let mut p = DMatrix::zeros(2, 2);
        for _ in 0..1000 {
            p = backward_information_step(&p, &m, 1e-3).unwrap();
        }
        assert_eq!(p.amax(), 0.0);
    }

    /// Newton iteration on the three free entries of a symmetric 2×2 matrix,
    /// with a finite-difference Jacobian.
    fn newton_sym2<F>(f: F, guess: [f64; 3]) -> DMatrix<f64>
    where
        F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    {
        let to_m = |v: [f64; 3]| DMatrix::from_row_slice(2, 2, &[v[0], v[1], v[1], v[2]]);
        let to_v = |m: &DMatrix<f64>| [m[(0, 0)], m[(0, 1)], m[(1, 1)]];
        let mut x = guess;
        for _ in 0..100 {
            let r = to_v(&f(&to_m(x)));
            let mut jac = DMatrix::zeros(3, 3);
            for j in 0..3 {
                let h = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x;
                xp[j] += h;
                let rp = to_v(&f(&to_m(xp)));
                for i in 0..3 {
                    jac[(i, j)] = (rp[i] - r[i]) / h;
                }
            }
            let step = jac
                .lu()
                .solve(&DVector::from_row_slice(&r))
                .expect("singular Jacobian");
            for j in 0..3 {
                x[j] -= step[j];
            }
            if step.amax() < 1e-15 {
                break;
            }
        }
        to_m(x)
    }

    #[test]
    fn information_steady_state_matches_root() {
        let m = app(0.1);
        let root = newton_sym2(|p| information_rate(&m, p), [1.0, 0.0, 1.0]);
        assert!(information_rate(&m, &root).norm() < 1e-10);
        assert!(linalg::min_eigenvalue(&root) > 0.0);

        let mut p = DMatrix::zeros(2, 2);
        for _ in 0..200_000 {
            p = backward_information_step(&p, &m, 1e-3).unwrap();
        }
        assert!(information_rate(&m, &p).norm() < 1e-8);
        assert_relative_eq!(p, root, max_relative = 1e-6);
    }

    #[test]
    fn forward_covariance_steady_state_matches_root() {
        let m = app(0.1);
        let root = newton_sym2(|v| covariance_rate(&m, v), [1.0, 0.0, 1.0]);
        assert!(linalg::min_eigenvalue(&root) > 0.0);
        let mut v = DMatrix::identity(2, 2) * 11.0;
        for _ in 0..200_000 {
            v = rk4_step(&v, 1e-3, |x| covariance_rate(&m, x));
        }
        assert!(covariance_rate(&m, &v).norm() < 1e-6);
        assert_relative_eq!(v, root, max_relative = 1e-6);
    }

    #[test]
    fn current_increment_arithmetic() {
        assert_relative_eq!(
            current_increment(0.5, 0.02, 0.001, 2.0),
            0.0055,
            epsilon = 1e-15
        );
        assert_eq!(current_increment(0.0, 0.0, 0.001, 2.0), 0.0);
        assert_eq!(innovation(0.5 * 0.001, 0.5, 0.001, 0.1), 0.0);
        assert_relative_eq!(innovation(0.0, 1.0, 0.001, 2.0), -0.004, epsilon = 1e-15);
    }

    #[test]
    fn reference_requires_measurement() {
        let m = LinearGaussianModel::oscillator(10.0, 0.0, 1.0).unwrap();
        let init = thermal_state(1.0, 1).unwrap();
        let err = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 1.0, 1).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn reference_record_is_consistent_and_deterministic() {
        let m = app(2.0);
        let init = thermal_state(5.0, 1).unwrap();
        let (states, rec) =
            simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 0.5, 7).unwrap();
        assert_eq!(states.len(), rec.len() + 1);
        assert_eq!(rec.len(), 500);
        let dw = rec.dw_true.as_ref().unwrap();
        for i in 0..rec.len() {
            let expect = states[i].mean[0] * rec.dt + dw[i] / 4.0;
            assert_relative_eq!(rec.di[i], expect, epsilon = 1e-15);
        }
        let (_, again) = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 0.5, 7).unwrap();
        assert_eq!(rec, again);
        let (_, other) = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 0.5, 8).unwrap();
        assert_ne!(rec.di, other.di);
    }

    #[test]
    fn filter_on_empty_record_returns_init() {
        let init = thermal_state(3.0, 1).unwrap();
        let rec = MeasurementRecord::new(0.0, 1e-3, vec![], None).unwrap();
        let out = run_forward_filter(&app(0.1), &init, &DriveSignal::zero(), &rec).unwrap();
        assert_eq!(out, vec![init]);
    }

    #[test]
    fn filter_single_step_is_forward_step() {
        let m = app(0.1);
        let init = GaussianState::new(
            DVector::from_row_slice(&[0.3, -0.1]),
            DMatrix::identity(2, 2) * 3.0,
        )
        .unwrap();
        let rec = MeasurementRecord::new(0.0, 1e-3, vec![0.002], None).unwrap();
        let out = run_forward_filter(&m, &init, &DriveSignal::zero(), &rec).unwrap();
        let dw = innovation(0.002, 0.3, 1e-3, 0.1);
        assert_eq!(out[1], forward_step(&init, &m, 0.0, dw, 1e-3).unwrap());
    }

    #[test]
    fn filter_reproduces_reference() {
        let m = app(0.1);
        let init = thermal_state(5.0, 1).unwrap();
        let drive = DriveSignal::new(vec![Impulse {
            center: 2.0,
            width: 0.15,
            height: 50.0,
        }])
        .unwrap();
        let (r, rec) = simulate_reference(&m, &init, &drive, 1e-3, 6.0, 11).unwrap();
        let f = run_forward_filter(&m, &init, &drive, &rec).unwrap();
        let dw = rec.dw_true.as_ref().unwrap();
        let max_dev = r
            .iter()
            .zip(&f)
            .map(|(a, b)| (a.mean[0] - b.mean[0]).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-9, "max deviation {max_dev}");
        for i in 0..rec.len() {
            let inn = innovation(rec.di[i], f[i].mean[0], rec.dt, 0.1);
            assert!((inn - dw[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn covariances_are_noise_independent() {
        let m = app(0.1);
        let init = thermal_state(5.0, 1).unwrap();
        let (a, ra) = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 1.0, 1).unwrap();
        let (b, rb) = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 1.0, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.cov, y.cov);
        }
        let ba = run_backward(&m, &DriveSignal::zero(), &ra, BackwardOptions::default()).unwrap();
        let bb = run_backward(&m, &DriveSignal::zero(), &rb, BackwardOptions::default()).unwrap();
        for (x, y) in ba.iter().zip(&bb) {
            assert_eq!(x.info, y.info);
        }
    }

    #[test]
    fn covariance_symmetry_drift_is_small() {
        let m = app(2.0);
        let mut v = DMatrix::from_row_slice(2, 2, &[11.0, 0.4, 0.4, 7.0]);
        for _ in 0..2000 {
            let raw = rk4_step(&v, 1e-3, |x| covariance_rate(&m, x));
            assert!(linalg::asymmetry(&raw) < 1e-6);
            let s = GaussianState {
                mean: DVector::zeros(2),
                cov: v,
            };
            v = forward_step(&s, &m, 0.0, 0.0, 1e-3).unwrap().cov;
            assert!(linalg::asymmetry(&v) < 1e-10);
        }
    }

    #[test]
    fn mean_response_is_linear_in_drive() {
        let m = app(0.1);
        let init = thermal_state(5.0, 1).unwrap();
        let (_, rec) = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 3.0, 5).unwrap();
        let d1 = DriveSignal::new(vec![Impulse {
            center: 1.0,
            width: 0.1,
            height: 20.0,
        }])
        .unwrap();
        let d2 = DriveSignal::new(vec![Impulse {
            center: 2.0,
            width: 0.2,
            height: 7.0,
        }])
        .unwrap();
        let both = DriveSignal::new([d1.impulses.clone(), d2.impulses.clone()].concat()).unwrap();
        let run = |d: &DriveSignal| run_forward_filter(&m, &init, d, &rec).unwrap();
        let (z, a, b, ab) = (run(&DriveSignal::zero()), run(&d1), run(&d2), run(&both));
        for i in 0..z.len() {
            let lhs = &ab[i].mean - &z[i].mean;
            let rhs = (&a[i].mean - &z[i].mean) + (&b[i].mean - &z[i].mean);
            assert!((lhs - rhs).amax() < 1e-9);
        }
    }

    #[test]
    fn unmonitored_mean_rotates() {
        let m = LinearGaussianModel::oscillator(10.0, 0.0, 1.0).unwrap();
        let s0 = GaussianState::new(
            DVector::from_row_slice(&[1.0, 0.5]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let dt = 1e-4;
        let mut s = s0.clone();
        let steps = 10_000;
        for _ in 0..steps {
            s = forward_step(&s, &m, 0.0, 0.0, dt).unwrap();
        }
        // exp(A t) for A = 5Ω is a clockwise rotation by 5t.
        let t = steps as f64 * dt;
        let (sin, cos) = (5.0 * t).sin_cos();
        let exact = [cos * 1.0 + sin * 0.5, -sin * 1.0 + cos * 0.5];
        // Euler's global error is O(dt): about ½·25·t·dt in radius here.
        assert!((s.mean[0] - exact[0]).abs() < 20.0 * dt);
        assert!((s.mean[1] - exact[1]).abs() < 20.0 * dt);
    }

    #[test]
    fn backward_terminal_and_duality() {
        let m = app(0.1);
        let init = thermal_state(5.0, 1).unwrap();
        let (_, rec) = simulate_reference(&m, &init, &DriveSignal::zero(), 1e-3, 6.0, 3).unwrap();
        let opts = BackwardOptions {
            nu: 1e6,
            track_covariance: true,
        };
        let b = run_backward(&m, &DriveSignal::zero(), &rec, opts).unwrap();
        assert_eq!(b.len(), rec.len() + 1);
        let last = b.last().unwrap();
        assert_eq!(last.info.amax(), 0.0);
        assert_eq!(last.mean.amax(), 0.0);
        let first = &b[0];
        let p_inv = first.info.clone().try_inverse().unwrap();
        let u = first.cov_approx.as_ref().unwrap();
        for (x, y) in p_inv.iter().zip(u.iter()) {
            assert!((x - y).abs() <= 1e-3 * y.abs().max(1e-12), "{p_inv} vs {u}");
        }
    }

    #[test]
    fn backward_zero_current_keeps_identity_mean() {
        // With dI = 0 the z-update has no source, so from the identity effect
        // everything stays zero; a nonzero terminal mean would decay instead.
        let m = app(0.1);
        let rec = MeasurementRecord::new(0.0, 1e-3, vec![0.0; 200], None).unwrap();
        let b = run_backward(&m, &DriveSignal::zero(), &rec, BackwardOptions::default()).unwrap();
        assert!(b.iter().all(|e| e.info_mean.amax() == 0.0));
    }
}
