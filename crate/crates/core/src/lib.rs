//! Gaussian filtering and smoothing for a continuously monitored oscillator,
//! and an impulse-force detector built on the smoothed trajectory.
//!
//! The pipeline is:
//! 1. [`sde::simulate_reference`] produces a reference trajectory and current record.
//! 2. [`sde::run_forward_filter`] and [`sde::run_backward`] condition a state on the
//!    past and an effect on the future of that record.
//! 3. [`smoothing::combine_gaussians`] merges them into smoothed estimates.
//! 4. [`detection`] finds impulse arrival times in the smoothed position.
//!
//! [`harness`] wires these into scenarios, Monte Carlo sweeps and artifacts.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod record;
pub mod sde;
pub mod smoothing;

pub use detection::{DetectionConfig, DetectionReport, RocPoint};
pub use error::{Error, Result};
pub use harness::{ScenarioConfig, ScenarioOutput, SweepResult};
pub use model::{
    derive_dynamics_matrices, symplectic_form, thermal_state, DriveSignal, DynamicsMatrices,
    EffectState, GaussianState, Impulse, LinearGaussianModel,
};
pub use record::MeasurementRecord;
pub use sde::{BackwardOptions, TrajectoryBundle};
pub use smoothing::{combine_gaussians, SmoothedEstimate};
