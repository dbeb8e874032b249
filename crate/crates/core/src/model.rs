//! Linear Gaussian models, states, effects and drive signals.
//!
//! Phase-space vectors are ordered `(x₁, p₁, …, xₙ, pₙ)`. Times are in ms and
//! rates in 1/ms throughout, so "10 kHz" is written `10.0`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Block-diagonal symplectic form `⊕ₖ [[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> Result<DMatrix<f64>> {
    if n_modes == 0 {
        return Err(Error::InvalidDimension(
            "symplectic form needs at least one mode".into(),
        ));
    }
    let dim = 2 * n_modes;
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    Ok(omega)
}

/// Drift and diffusion matrices of the monitored linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsMatrices {
    /// Mean drift, `Ω(G + Im[C̃†C̃])`.
    pub a: DMatrix<f64>,
    /// Measurement row, `2 Re[C̃]`.
    pub c: DMatrix<f64>,
    /// Backaction diffusion, `Ω Re[C̃†C̃] Ωᵀ`.
    pub d: DMatrix<f64>,
    /// Cross term, `-Im[C̃] Ωᵀ`.
    pub gamma: DMatrix<f64>,
}

/// Builds `(A, C, D, Γ)` from the Hamiltonian form `G`, measurement
/// coefficients `C̃` and symplectic form `Ω`.
pub fn derive_dynamics_matrices(
    g: &DMatrix<f64>,
    c_tilde: &DMatrix<Complex<f64>>,
    omega: &DMatrix<f64>,
) -> Result<DynamicsMatrices> {
    let dim = omega.nrows();
    if !omega.is_square() || g.shape() != (dim, dim) {
        return Err(Error::InvalidDimension(format!(
            "G is {:?}, Ω is {:?}",
            g.shape(),
            omega.shape()
        )));
    }
    if c_tilde.shape() != (1, dim) {
        return Err(Error::InvalidDimension(format!(
            "C̃ must be 1×{dim}, got {:?}",
            c_tilde.shape()
        )));
    }
    if g != &g.transpose() {
        return Err(Error::validation("G must be symmetric"));
    }

    let outer = c_tilde.adjoint() * c_tilde;
    let re_outer = outer.map(|z| z.re);
    let im_outer = outer.map(|z| z.im);
    let re_c = c_tilde.map(|z| z.re);
    let im_c = c_tilde.map(|z| z.im);

    let a = omega * (g + im_outer);
    let c = re_c * 2.0;
    let d = omega * re_outer * omega.transpose();
    let gamma = -(im_c * omega.transpose());
    Ok(DynamicsMatrices { a, c, d, gamma })
}

/// A continuously monitored linear system with one homodyne channel.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    n_modes: usize,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
    c_tilde: DMatrix<Complex<f64>>,
    eta: f64,
    omega: DMatrix<f64>,
    dyn_: DynamicsMatrices,
}

impl LinearGaussianModel {
    pub fn new(
        g: DMatrix<f64>,
        b: DMatrix<f64>,
        c_tilde: DMatrix<Complex<f64>>,
        eta: f64,
    ) -> Result<Self> {
        if !g.nrows().is_multiple_of(2) || g.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "G must be 2n×2n, got {:?}",
                g.shape()
            )));
        }
        let n_modes = g.nrows() / 2;
        if b.nrows() != 2 * n_modes || b.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "B must be {}×m, got {:?}",
                2 * n_modes,
                b.shape()
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::validation(format!("η = {eta} outside [0, 1]")));
        }
        let omega = symplectic_form(n_modes)?;
        let dyn_ = derive_dynamics_matrices(&g, &c_tilde, &omega)?;
        Ok(Self {
            n_modes,
            g,
            b,
            c_tilde,
            eta,
            omega,
            dyn_,
        })
    }

    /// Single oscillator of frequency `omega_a` with position measured at
    /// strength `kappa`: `G = (ω_a/2) I₂`, `C̃ = (√(2κ), 0)`, `B = (0, -1)ᵀ`.
    pub fn oscillator(omega_a: f64, kappa: f64, eta: f64) -> Result<Self> {
        if !(omega_a.is_finite() && kappa.is_finite()) || kappa < 0.0 {
            return Err(Error::validation(format!(
                "bad oscillator parameters ω_a = {omega_a}, κ = {kappa}"
            )));
        }
        let g = DMatrix::identity(2, 2) * (omega_a / 2.0);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, -1.0]);
        let c_tilde = DMatrix::from_row_slice(
            1,
            2,
            &[
                Complex::new((2.0 * kappa).sqrt(), 0.0),
                Complex::new(0.0, 0.0),
            ],
        );
        Self::new(g, b, c_tilde, eta)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c_tilde(&self) -> &DMatrix<Complex<f64>> {
        &self.c_tilde
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.dyn_.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.dyn_.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.dyn_.d
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.dyn_.gamma
    }

    pub fn dynamics(&self) -> &DynamicsMatrices {
        &self.dyn_
    }

    /// Effective measurement strength `η‖C‖²/8`; equals κ for the oscillator.
    ///
    /// The current is normalised as `dI = r dt + dW/√(8κ_eff)` with `r` the
    /// [`readout`](Self::readout), which reduces to `⟨x⟩dt + dW/√(8κ)`.
    pub fn measurement_rate(&self) -> f64 {
        self.eta * self.dyn_.c.norm_squared() / 8.0
    }

    /// Quadrature the current reports on: `C·X / ‖C‖` (`x` for the oscillator).
    pub fn readout(&self, mean: &DVector<f64>) -> f64 {
        let norm = self.dyn_.c.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.dyn_.c * mean)[0] / norm
    }

    /// Drive vector `B u`; the drive is scalar and applied to every column of `B`.
    pub fn drive_term(&self, u: f64) -> DVector<f64> {
        self.b.column_sum() * u
    }
}

/// Mean and covariance of a forward-evolving Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::InvalidDimension(format!(
                "covariance {:?} does not match mean of length {}",
                cov.shape(),
                mean.len()
            )));
        }
        if linalg::asymmetry(&cov) > 1e-10 {
            return Err(Error::validation("covariance is not symmetric"));
        }
        if linalg::min_eigenvalue(&cov) < -1e-9 {
            return Err(Error::validation("covariance is not positive semidefinite"));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Thermal state with occupation `n_bar`: zero mean, covariance `(2n̄+1) I`.
pub fn thermal_state(n_bar: f64, n_modes: usize) -> Result<GaussianState> {
    if !(n_bar >= 0.0) || !n_bar.is_finite() {
        return Err(Error::validation(format!("n̄ = {n_bar} must be ≥ 0")));
    }
    if n_modes == 0 {
        return Err(Error::InvalidDimension("thermal state needs a mode".into()));
    }
    let dim = 2 * n_modes;
    Ok(GaussianState {
        mean: DVector::zeros(dim),
        cov: DMatrix::identity(dim, dim) * (2.0 * n_bar + 1.0),
    })
}

/// Gaussian parameterisation of a backward-evolving POVM effect.
///
/// The effect is carried in information form: `info` is `P = U⁻¹` and
/// `info_mean` is `z = P Y`. Both are finite at the terminal identity effect
/// (`P = 0`, `z = 0`) where `U` itself is infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectState {
    /// Effect mean `Y`. Where `P` is singular this is the large-ν
    /// regularised value `(P + I/ν)⁻¹ z`.
    pub mean: DVector<f64>,
    pub info: DMatrix<f64>,
    pub info_mean: DVector<f64>,
    /// `U` propagated from `U_T = ν I`, present only when requested.
    pub cov_approx: Option<DMatrix<f64>>,
}

impl EffectState {
    /// Terminal identity effect: `Y = 0`, `P = 0`.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            info: DMatrix::zeros(dim, dim),
            info_mean: DVector::zeros(dim),
            cov_approx: None,
        }
    }

    /// Effect with finite covariance `U` and mean `Y`.
    pub fn from_covariance(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.shape() != (dim, dim) {
            return Err(Error::InvalidDimension("effect covariance shape".into()));
        }
        let info = cov
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::validation("effect covariance is singular"))?;
        let info = linalg::symmetrize(&info);
        let info_mean = &info * &mean;
        Ok(Self {
            mean,
            info,
            info_mean,
            cov_approx: Some(cov),
        })
    }

    /// Effect from information form, recovering `Y` with a `ν` regulariser.
    pub fn from_information(info: DMatrix<f64>, info_mean: DVector<f64>, nu: f64) -> Self {
        let dim = info_mean.len();
        let reg = &info + DMatrix::identity(dim, dim) / nu;
        let mean = reg
            .lu()
            .solve(&info_mean)
            .unwrap_or_else(|| DVector::zeros(dim));
        Self {
            mean,
            info,
            info_mean,
            cov_approx: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One square pulse of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    /// Centre `t_k` in ms.
    pub center: f64,
    /// Width `w` in ms.
    pub width: f64,
    /// Height `s` in 1/ms.
    pub height: f64,
}

/// Sum of square pulses `u(t) = Σₖ ⊓ˢ_w(tₖ)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSignal {
    pub impulses: Vec<Impulse>,
}

impl DriveSignal {
    pub fn new(impulses: Vec<Impulse>) -> Result<Self> {
        for imp in &impulses {
            if !(imp.width >= 0.0 && imp.height >= 0.0 && imp.center.is_finite()) {
                return Err(Error::validation(format!("bad impulse {imp:?}")));
            }
        }
        Ok(Self { impulses })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    /// `u(t)`; overlapping pulses add.
    pub fn eval(&self, t: f64) -> f64 {
        self.impulses
            .iter()
            .filter(|imp| (t - imp.center).abs() < imp.width / 2.0)
            .map(|imp| imp.height)
            .sum()
    }

    /// Drive held over each step `[t0 + i dt, t0 + (i+1) dt)`, sampled at the
    /// step midpoint.
    pub fn sample_steps(&self, t0: f64, dt: f64, n_steps: usize) -> Vec<f64> {
        (0..n_steps)
            .map(|i| self.eval(t0 + (i as f64 + 0.5) * dt))
            .collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let mut c: Vec<f64> = self.impulses.iter().map(|i| i.center).collect();
        c.sort_by(f64::total_cmp);
        c
    }
}
