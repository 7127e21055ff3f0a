//! State estimators.
//!
//! All filters share the prediction step and, except the plain KF, the
//! whitened formulation: the prior `(x̂⁻, P⁻)` and the measurement are
//! stacked and scaled by the inverse square-root factors of `P⁻` and `R*`
//! so that nominal noise has identity covariance. Robustness then amounts
//! to reweighting those scalar channels.

mod adaptive;
mod config;
mod kf;
mod robust;
mod stream;
mod variational;
mod whiten;

use nalgebra::{DMatrix, DVector};

pub use adaptive::{ar1_step, ar2_step, threshold_xi, Ar2Config, ChannelHyper, TAU2_FLOOR};
pub use config::{ChannelConfig, Estimator, EstimatorKind, FilterConfig};
pub use kf::{kf_step, posterior_cov, predict};
pub use robust::{robust_update, solve_fixed_point, solve_fixed_point_with, stkf_step, FixedPointTrace, RobustSolution};
pub use stream::{run_stream, StreamConfig};
pub use variational::{vbkf_fixed_step, vbkf_step};
pub use whiten::{whiten, Whitened};

use crate::error::{Error, Result};
use crate::linalg;

/// Posterior mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl FilterState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.shape() != (x.len(), x.len()) {
            return Err(Error::Dimension(format!("P must be {0} x {0}", x.len())));
        }
        linalg::check_spd(&p, "initial covariance")?;
        Ok(Self { x, p })
    }
}

/// Per-step diagnostics shared by every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Number of state updates performed (1 for the KF).
    pub iterations: usize,
    /// Whitened residual per channel at the final estimate.
    pub errors: Vec<f64>,
    /// Channel variance `1/d(e)` used by the final update.
    pub lambdas: Vec<f64>,
    /// Channels whose hyperparameter update was reverted (outlier switching).
    pub reverted: Vec<bool>,
    /// Innovation `y − C x̂⁻`.
    pub innovation: DVector<f64>,
}

/// Stopping rule of the fixed-point loop: relative step change `≤ eps` or
/// `max_iter` passes, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointTol {
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for FixedPointTol {
    fn default() -> Self {
        Self { eps: 0.01, max_iter: 4 }
    }
}

impl FixedPointTol {
    pub fn new(eps: f64, max_iter: usize) -> Result<Self> {
        if !(eps > 0.0) || max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "fixed-point tolerance needs eps > 0 and max_iter >= 1 (got {eps}, {max_iter})"
            )));
        }
        Ok(Self { eps, max_iter })
    }
}
