//! The forward/backward combination must agree with a discrete Kalman filter
//! plus Rauch–Tung–Striebel smoother on the Euler discretisation of the same
//! linear system, up to O(dt).

use nalgebra::{Matrix2, Vector2};
use qsmooth::sde::{run_backward, run_forward_filter, simulate_reference, BackwardOptions};
use qsmooth::{combine_gaussians, thermal_state, DriveSignal, Impulse, LinearGaussianModel};

fn m2(m: &nalgebra::DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

struct Smoothed {
    mean: Vec<Vector2<f64>>,
    cov: Vec<Matrix2<f64>>,
}

/// Update-then-predict Kalman filter with RTS backward sweep. Observation `k`
/// is `y_k = √(8κ)·dI_k = C x_k dt + noise` of variance `dt`.
fn kalman_rts(
    model: &LinearGaussianModel,
    m0: Vector2<f64>,
    p0: Matrix2<f64>,
    u: &[f64],
    di: &[f64],
    dt: f64,
) -> Smoothed {
    let a = m2(model.a());
    let d = m2(model.d());
    let c = Vector2::new(model.c()[(0, 0)], model.c()[(0, 1)]);
    let b = Vector2::new(model.b()[(0, 0)], model.b()[(1, 0)]);
    let f = Matrix2::identity() + a * dt;
    let kappa = model.measurement_rate();
    let n = di.len();

    let (mut prior_m, mut prior_p) = (vec![m0], vec![p0]);
    let (mut post_m, mut post_p) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let (m, p) = (prior_m[k], prior_p[k]);
        let h = c * dt;
        let s = h.dot(&(p * h)) + dt;
        let gain = p * h / s;
        let y = (8.0 * kappa).sqrt() * di[k];
        let mu = m + gain * (y - h.dot(&m));
        let pu = p - gain * (h.transpose() * p);
        post_m.push(mu);
        post_p.push(pu);
        prior_m.push(f * mu + b * u[k] * dt);
        prior_p.push(f * pu * f.transpose() + d * dt);
    }
    let mut mean = vec![prior_m[n]; n + 1];
    let mut cov = vec![prior_p[n]; n + 1];
    for k in (0..n).rev() {
        let g = post_p[k] * f.transpose() * prior_p[k + 1].try_inverse().unwrap();
        mean[k] = post_m[k] + g * (mean[k + 1] - prior_m[k + 1]);
        cov[k] = post_p[k] + g * (cov[k + 1] - prior_p[k + 1]) * g.transpose();
    }
    Smoothed { mean, cov }
}

fn compare(kappa: f64, n_bar_f: f64, drive: DriveSignal, seed: u64) -> (f64, f64) {
    let model = LinearGaussianModel::oscillator(10.0, kappa, 1.0).unwrap();
    let dt = 1e-4;
    let (_, record) = simulate_reference(
        &model,
        &thermal_state(5.0, 1).unwrap(),
        &drive,
        dt,
        1.0,
        seed,
    )
    .unwrap();
    let init = thermal_state(n_bar_f, 1).unwrap();
    let fwd = run_forward_filter(&model, &init, &drive, &record).unwrap();
    let bwd = run_backward(&model, &drive, &record, BackwardOptions::default()).unwrap();
    let u = drive.sample_steps(0.0, dt, record.len());
    let oracle = kalman_rts(&model, Vector2::zeros(), m2(&init.cov), &u, &record.di, dt);

    let (mut mean_err, mut cov_err, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..=record.len() {
        let s = combine_gaussians(&fwd[k], &bwd[k]).unwrap();
        let sm = Vector2::new(s.mean[0], s.mean[1]);
        mean_err = mean_err.max((sm - oracle.mean[k]).amax());
        cov_err = cov_err.max((m2(&s.cov) - oracle.cov[k]).amax() / oracle.cov[k].amax());
        scale = scale.max(oracle.mean[k].amax());
    }
    (mean_err / scale.max(1.0), cov_err)
}

#[test]
fn smoother_matches_rts_without_drive() {
    for (kappa, n_bar_f, seed) in [(1.0, 3.0, 1), (0.1, 3.0, 2), (0.01, 50.0, 3)] {
        let (mean_err, cov_err) = compare(kappa, n_bar_f, DriveSignal::zero(), seed);
        assert!(mean_err < 5e-3, "κ={kappa}: mean error {mean_err:.2e}");
        assert!(cov_err < 5e-3, "κ={kappa}: covariance error {cov_err:.2e}");
    }
}

#[test]
fn smoother_matches_rts_with_drive() {
    let drive = DriveSignal::new(vec![
        Impulse {
            center: 0.3,
            width: 0.1,
            height: 50.0,
        },
        Impulse {
            center: 0.7,
            width: 0.05,
            height: 20.0,
        },
    ])
    .unwrap();
    let (mean_err, cov_err) = compare(0.5, 3.0, drive, 9);
    assert!(mean_err < 5e-3, "mean error {mean_err:.2e}");
    assert!(cov_err < 5e-3, "covariance error {cov_err:.2e}");
}
