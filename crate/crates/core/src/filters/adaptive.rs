use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kf::{posterior_cov, predict};
use super::robust::robust_update;
use super::{whiten, FilterState, FixedPointTol, StepDiagnostics};
use crate::error::{Error, Result};
use crate::losses::{ChannelLosses, LossKind, RobustLoss};
use crate::statespace::LinearModel;

/// Lower bound applied to adapted scales.
pub const TAU2_FLOOR: f64 = 1e-12;

/// Per-channel adaptive hyperparameters: degrees of freedom, scale and
/// forgetting factor. `ρ = 1` freezes a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHyper {
    pub nu: Vec<f64>,
    pub tau2: Vec<f64>,
    pub rho: Vec<f64>,
}

impl ChannelHyper {
    pub fn new(nu: Vec<f64>, tau2: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if nu.len() != tau2.len() || nu.len() != rho.len() {
            return Err(Error::Dimension("hyperparameter vectors differ in length".into()));
        }
        for i in 0..nu.len() {
            if !(nu[i] > 0.0) {
                return Err(Error::InvalidParameter(format!("channel {i}: nu must be positive")));
            }
            if !(tau2[i] > 0.0) {
                return Err(Error::InvalidParameter(format!("channel {i}: tau2 must be positive")));
            }
            if !(rho[i] > 0.0 && rho[i] <= 1.0) {
                return Err(Error::InvalidParameter(format!("channel {i}: rho must lie in (0, 1]")));
            }
        }
        Ok(Self { nu, tau2, rho })
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn is_adaptive(&self, i: usize) -> bool {
        self.rho[i] < 1.0
    }
}

/// Outlier-switching configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar2Config {
    pub eta: f64,
    /// Channels on which switching is active; empty means all.
    #[serde(default)]
    pub enabled: Vec<bool>,
}

impl Default for Ar2Config {
    fn default() -> Self {
        Self { eta: 1.0, enabled: Vec::new() }
    }
}

impl Ar2Config {
    pub fn new(eta: f64, enabled: Vec<bool>) -> Result<Self> {
        let cfg = Self { eta, enabled };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be finite and non-negative, got {}", self.eta)));
        }
        if !(0.25..=1.0).contains(&self.eta) {
            log::warn!("eta = {} lies outside the advised range [0.25, 1]", self.eta);
        }
        Ok(())
    }

    fn is_enabled(&self, i: usize) -> bool {
        self.enabled.get(i).copied().unwrap_or(true)
    }
}

/// Switching threshold `ξ = η √(2ν²/(ν+1)³) τ²`, the scaled standard
/// deviation of the Gaussian approximation to the scale posterior.
pub fn threshold_xi(eta: f64, nu: f64, tau2: f64) -> f64 {
    eta * (2.0 * nu * nu / (nu + 1.0).powi(3)).sqrt() * tau2
}

struct AdaptiveOutcome {
    state: FilterState,
    diag: StepDiagnostics,
    hyper: ChannelHyper,
}

fn adaptive_step(
    model: &LinearModel,
    state: &FilterState,
    hyper: &ChannelHyper,
    switching: Option<&Ar2Config>,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    kinds: &[LossKind],
    tol: FixedPointTol,
) -> Result<AdaptiveOutcome> {
    let l = model.channels();
    if hyper.len() != l || kinds.len() != l {
        return Err(Error::Dimension(format!("expected {l} channel hyperparameters and loss kinds")));
    }
    let mut nu = hyper.nu.clone();
    let mut tau2_prior = hyper.tau2.clone();
    for i in 0..l {
        if hyper.is_adaptive(i) {
            nu[i] = hyper.rho[i] * hyper.nu[i] + 1.0;
            tau2_prior[i] = hyper.rho[i] * hyper.tau2[i];
        }
    }
    let losses = (0..l)
        .map(|i| RobustLoss::new(kinds[i], nu[i], tau2_prior[i].max(TAU2_FLOOR)))
        .collect::<Result<Vec<_>>>()?;
    let losses = ChannelLosses::new(losses, model.n(), model.m())?;

    let (x_prior, p_prior) = predict(model, state, u)?;
    let wh = whiten(&x_prior, &p_prior, &model.r, y, &model.c)?;
    let sol = robust_update(&wh, &losses, &x_prior, y, &model.c, tol)?;
    let p = posterior_cov(&p_prior, &sol.gain, &model.c, &model.r);
    let e = wh.residual(&sol.x);
    let wpw = wh.projected_diag(&p);

    let mut next = hyper.clone();
    let mut reverted = vec![false; l];
    for i in 0..l {
        if !hyper.is_adaptive(i) {
            continue;
        }
        next.nu[i] = nu[i];
        let candidate = (tau2_prior[i] + (e[i] * e[i] + wpw[i]) / nu[i]).max(TAU2_FLOOR);
        next.tau2[i] = candidate;
        if let Some(cfg) = switching {
            if cfg.is_enabled(i) && (candidate - tau2_prior[i]).abs() > threshold_xi(cfg.eta, nu[i], tau2_prior[i]) {
                next.tau2[i] = hyper.tau2[i];
                reverted[i] = true;
            }
        }
    }
    Ok(AdaptiveOutcome {
        state: FilterState { x: sol.x, p },
        diag: StepDiagnostics {
            iterations: sol.iterations,
            errors: e.iter().copied().collect(),
            lambdas: sol.lambdas,
            reverted,
            innovation: y - &model.c * &x_prior,
        },
        hyper: next,
    })
}

/// Robust filter with variational adaptation of every channel's scale.
///
/// Channels with `ρ_i < 1` predict `ν = ρν + 1`, `τ²⁻ = ρτ²`, run the robust
/// update with those values, then set `τ²⁺ = τ²⁻ + (e_i² + [W P Wᵀ]_ii)/ν`.
/// Channels with `ρ_i = 1` keep their parameters.
pub fn ar1_step(
    model: &LinearModel,
    state: &FilterState,
    hyper: &ChannelHyper,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    kinds: &[LossKind],
    tol: FixedPointTol,
) -> Result<(FilterState, StepDiagnostics, ChannelHyper)> {
    let out = adaptive_step(model, state, hyper, None, u, y, kinds, tol)?;
    Ok((out.state, out.diag, out.hyper))
}

/// [`ar1_step`] with outlier switching: a scale update that moves further
/// than [`threshold_xi`] from the predicted scale is treated as an outlier
/// and the previous scale is kept.
#[allow(clippy::too_many_arguments)]
pub fn ar2_step(
    model: &LinearModel,
    state: &FilterState,
    hyper: &ChannelHyper,
    cfg: &Ar2Config,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    kinds: &[LossKind],
    tol: FixedPointTol,
) -> Result<(FilterState, StepDiagnostics, ChannelHyper)> {
    cfg.validate()?;
    let out = adaptive_step(model, state, hyper, Some(cfg), u, y, kinds, tol)?;
    Ok((out.state, out.diag, out.hyper))
}
