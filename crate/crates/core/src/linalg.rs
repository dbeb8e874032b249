//! Small dense-matrix helpers shared by the propagators.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues above this (and below zero) are treated as round-off and clipped.
pub const PSD_CLIP: f64 = -1e-9;
/// Eigenvalues below this are reported as instability.
pub const PSD_FAIL: f64 = -1e-6;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Symmetrizes `m` and checks it is positive semidefinite.
///
/// Eigenvalues in `(PSD_FAIL, PSD_CLIP]` are still accepted unchanged; only
/// [`project_psd`] performs repair.
pub fn checked_covariance(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let m = symmetrize(&m);
    let min = min_eigenvalue(&m);
    if !min.is_finite() || min < PSD_FAIL {
        return Err(Error::NumericalInstability {
            what,
            min_eigenvalue: min,
        });
    }
    Ok(m)
}

/// Symmetrizes and clips tiny negative eigenvalues to zero. Anything below
/// [`PSD_FAIL`] is an error, not a repair.
pub fn project_psd(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let m = symmetrize(&m);
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if !min.is_finite() || min < PSD_FAIL {
        return Err(Error::NumericalInstability {
            what,
            min_eigenvalue: min,
        });
    }
    if min >= 0.0 {
        return Ok(m);
    }
    if min > PSD_CLIP {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let rebuilt =
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        return Ok(symmetrize(&rebuilt));
    }
    // Between PSD_FAIL and PSD_CLIP: leave as-is, the next steps usually recover.
    Ok(m)
}

/// One classical RK4 step of an autonomous matrix ODE `dM/dt = f(M)`.
pub fn rk4_step<F>(m: &DMatrix<f64>, h: f64, f: F) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let k1 = f(m);
    let k2 = f(&(m + &k1 * (h / 2.0)));
    let k3 = f(&(m + &k2 * (h / 2.0)));
    let k4 = f(&(m + &k3 * h));
    m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}
