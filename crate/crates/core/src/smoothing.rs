//! Smoothed estimates from a forward state and a backward effect, plus the
//! position-marginal accuracy metrics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{EffectState, GaussianState};

/// Normalised product of the state and effect Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl SmoothedEstimate {
    pub fn x_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn x_variance(&self) -> f64 {
        self.cov[(0, 0)]
    }
}

/// Combines `N(⟨X⟩, V)` with the effect `N(Y, P⁻¹)`.
///
/// Precision is `V⁻¹ + P`; evaluated as `cov = (I + VP)⁻¹ V` and
/// `mean = (I + VP)⁻¹(⟨X⟩ + V z)` with `z = PY`, so neither `V` nor `P` is
/// inverted and `P = 0` returns the state unchanged.
pub fn combine_gaussians(state: &GaussianState, effect: &EffectState) -> Result<SmoothedEstimate> {
    let dim = state.dim();
    if effect.dim() != dim || effect.info.shape() != (dim, dim) {
        return Err(Error::InvalidDimension(format!(
            "state has dimension {dim}, effect {}",
            effect.dim()
        )));
    }
    let v = &state.cov;
    let m = DMatrix::identity(dim, dim) + v * &effect.info;
    let lu = m.lu();
    let rhs_mean = &state.mean + v * &effect.info_mean;
    let (Some(mean), Some(cov)) = (lu.solve(&rhs_mean), lu.solve(v)) else {
        return Err(Error::DegenerateCombination(
            "state and effect have no common support".into(),
        ));
    };
    if !mean.iter().chain(cov.iter()).all(|x| x.is_finite()) {
        return Err(Error::DegenerateCombination(
            "state and effect have no common support".into(),
        ));
    }
    Ok(SmoothedEstimate {
        mean,
        cov: linalg::symmetrize(&cov),
    })
}

/// Scalar smoothing of one quadrature: precision-weighted mean and
/// harmonic-mean variance.
pub fn smoothed_quadrature(x_f: f64, v11: f64, x_e: f64, u11: f64) -> Result<(f64, f64)> {
    if !(v11 > 0.0 && u11 > 0.0) {
        return Err(Error::validation(format!(
            "variances must be positive, got V₁₁ = {v11}, U₁₁ = {u11}"
        )));
    }
    let total = v11 + u11;
    let mean = u11 / total * x_f + v11 / total * x_e;
    let var = 1.0 / (1.0 / v11 + 1.0 / u11);
    Ok((mean, var))
}

/// Mean and variance of the first quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub mean: f64,
    pub var: f64,
}

impl Marginal {
    pub fn sigma(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(self.var > 0.0) {
            return 0.0;
        }
        let d = x - self.mean;
        (-0.5 * d * d / self.var).exp() / (2.0 * PI * self.var).sqrt()
    }
}

/// Anything with a Gaussian position marginal.
pub trait PositionMarginal {
    fn position_marginal(&self) -> Marginal;
}

impl PositionMarginal for GaussianState {
    fn position_marginal(&self) -> Marginal {
        Marginal {
            mean: self.mean[0],
            var: self.cov[(0, 0)],
        }
    }
}

impl PositionMarginal for SmoothedEstimate {
    fn position_marginal(&self) -> Marginal {
        Marginal {
            mean: self.x_mean(),
            var: self.x_variance(),
        }
    }
}

impl PositionMarginal for Marginal {
    fn position_marginal(&self) -> Marginal {
        *self
    }
}

/// Position density on `grid`. A zero-variance source gives all zeros.
pub fn position_pdf<S: PositionMarginal + ?Sized>(source: &S, grid: &[f64]) -> Vec<f64> {
    let m = source.position_marginal();
    grid.iter().map(|&x| m.density(x)).collect()
}

pub fn trapezoid(y: &[f64], x: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Quadrature grid for the total-variation integrals.
#[derive(Debug, Clone, PartialEq)]
pub enum XGrid {
    /// One grid for every time step.
    Fixed(Vec<f64>),
    /// Per step, `points` nodes spanning the union of `mean ± sigmas·σ` of the
    /// two compared marginals.
    Adaptive { points: usize, sigmas: f64 },
}

impl Default for XGrid {
    fn default() -> Self {
        XGrid::Adaptive {
            points: 2001,
            sigmas: 8.0,
        }
    }
}

/// `∫|p − q| dx` for two position marginals.
pub fn tv_step(a: Marginal, b: Marginal, grid: &XGrid) -> f64 {
    match grid {
        XGrid::Fixed(xs) => {
            let diff: Vec<f64> = xs
                .iter()
                .map(|&x| (a.density(x) - b.density(x)).abs())
                .collect();
            trapezoid(&diff, xs)
        }
        &XGrid::Adaptive { points, sigmas } => {
            let lo = (a.mean - sigmas * a.sigma()).min(b.mean - sigmas * b.sigma());
            let hi = (a.mean + sigmas * a.sigma()).max(b.mean + sigmas * b.sigma());
            if !(hi > lo) || points < 2 {
                return 0.0;
            }
            let h = (hi - lo) / (points - 1) as f64;
            let f = |i: usize| {
                let x = lo + i as f64 * h;
                (a.density(x) - b.density(x)).abs()
            };
            let inner: f64 = (1..points - 1).map(f).sum();
            h * (inner + 0.5 * (f(0) + f(points - 1)))
        }
    }
}

/// Time-indexed position marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSeries {
    pub times: Vec<f64>,
    pub marginals: Vec<Marginal>,
}

impl MarginalSeries {
    pub fn new<S: PositionMarginal>(times: &[f64], items: &[S]) -> Result<Self> {
        if times.len() != items.len() {
            return Err(Error::validation(format!(
                "{} times for {} marginals",
                times.len(),
                items.len()
            )));
        }
        Ok(Self {
            times: times.to_vec(),
            marginals: items
                .iter()
                .map(PositionMarginal::position_marginal)
                .collect(),
        })
    }
}

/// `Σ_t ∫ |P^a_t(x) − P^b_t(x)| dx`, unnormalised.
pub fn tv_distance_timeseries(a: &MarginalSeries, b: &MarginalSeries, grid: &XGrid) -> Result<f64> {
    let same_grid = a.times.len() == b.times.len()
        && a.times
            .iter()
            .zip(&b.times)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0));
    if !same_grid {
        return Err(Error::validation(
            "time grids of the compared trajectories differ",
        ));
    }
    if let XGrid::Fixed(xs) = grid {
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("x grid must be strictly increasing"));
        }
    }
    Ok(a.marginals
        .iter()
        .zip(&b.marginals)
        .map(|(&p, &q)| tv_step(p, q, grid))
        .sum())
}
