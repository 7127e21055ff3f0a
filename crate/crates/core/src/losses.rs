//! Robust loss family for scalar whitened channels.
//!
//! Each loss provides its value `J(e)`, weight `d(e)` with `J'(e) = d(e)·e`,
//! and weight-derivative factor `ι(e)` with `d'(e) = ι(e)·e`. The weight is
//! what enters the fixed-point normal equations; `1/d(e)` is the temporarily
//! inflated channel variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degrees of freedom at or above which every loss is treated as Gaussian.
pub const GAUSSIAN_NU: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `ν/2 · log(1 + e²/(ντ²))`, the Student's t induced loss.
    #[default]
    StudentLog,
    /// `ν² (1 − exp(−e²/(2ν²τ²)))`, the correntropy (Welsch) loss.
    ExponentialWelsch,
    /// `(2−ν)/ν · ((e²/τ²/(2−ν) + 1)^{ν/2} − 1)` for `ν ∈ (0, 2)`.
    PowerFamily,
    /// `√(ν(ν + e²/τ²)) − ν`.
    SquareRoot,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::StudentLog,
        LossKind::ExponentialWelsch,
        LossKind::PowerFamily,
        LossKind::SquareRoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::StudentLog => "student_log",
            LossKind::ExponentialWelsch => "exponential_welsch",
            LossKind::PowerFamily => "power_family",
            LossKind::SquareRoot => "square_root",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustLoss {
    pub kind: LossKind,
    pub nu: f64,
    pub tau2: f64,
}

impl RobustLoss {
    /// Validated constructor. A power-family request with `ν = 2` is mapped to
    /// the Gaussian sentinel with a warning.
    pub fn new(kind: LossKind, nu: f64, tau2: f64) -> Result<Self> {
        if !(nu > 0.0) || nu.is_nan() {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau2 must be positive, got {tau2}")));
        }
        let mut nu = nu;
        if kind == LossKind::PowerFamily && nu < GAUSSIAN_NU {
            if nu == 2.0 {
                log::warn!("power-family loss with nu = 2 is the Gaussian loss; using the Gaussian branch");
                nu = GAUSSIAN_NU;
            } else if nu > 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "power-family loss requires nu in (0, 2), got {nu}"
                )));
            }
        }
        Ok(Self { kind, nu, tau2 })
    }

    pub fn student(nu: f64, tau2: f64) -> Result<Self> {
        Self::new(LossKind::StudentLog, nu, tau2)
    }

    pub fn gaussian(tau2: f64) -> Self {
        Self { kind: LossKind::StudentLog, nu: GAUSSIAN_NU, tau2 }
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu >= GAUSSIAN_NU
    }

    pub fn value(&self, e: f64) -> f64 {
        kind_value(self.kind, self.nu, self.tau2, e)
    }

    pub fn weight(&self, e: f64) -> f64 {
        kind_weight(self.kind, self.nu, self.tau2, e)
    }

    pub fn iota(&self, e: f64) -> f64 {
        kind_iota(self.kind, self.nu, self.tau2, e)
    }

    /// Influence function `∂J/∂e = d(e)·e`.
    pub fn influence(&self, e: f64) -> f64 {
        self.weight(e) * e
    }

    /// Half-width `√ν·τ` of the region where the Student loss is convex.
    pub fn convexity_boundary(&self) -> Result<f64> {
        if self.kind != LossKind::StudentLog {
            return Err(Error::InvalidParameter(format!(
                "convexity boundary is defined for the student loss, not {}",
                self.kind.name()
            )));
        }
        Ok((self.nu * self.tau2).sqrt())
    }
}

pub(crate) fn kind_value(kind: LossKind, nu: f64, tau2: f64, e: f64) -> f64 {
    let e2 = e * e;
    if nu >= GAUSSIAN_NU {
        return e2 / (2.0 * tau2);
    }
    match kind {
        LossKind::StudentLog => 0.5 * nu * (e2 / (nu * tau2)).ln_1p(),
        LossKind::ExponentialWelsch => -nu * nu * (-e2 / (2.0 * nu * nu * tau2)).exp_m1(),
        LossKind::PowerFamily => {
            let s = e2 / tau2 / (2.0 - nu);
            (2.0 - nu) / nu * ((0.5 * nu) * s.ln_1p()).exp_m1()
        }
        LossKind::SquareRoot => {
            // √(ν² + νe²/τ²) − ν written to avoid cancellation for small e
            let r = nu * e2 / tau2;
            r / ((nu * nu + r).sqrt() + nu)
        }
    }
}

pub(crate) fn kind_weight(kind: LossKind, nu: f64, tau2: f64, e: f64) -> f64 {
    let e2 = e * e;
    if nu >= GAUSSIAN_NU {
        return 1.0 / tau2;
    }
    match kind {
        LossKind::StudentLog => nu / (nu * tau2 + e2),
        LossKind::ExponentialWelsch => (-e2 / (2.0 * nu * nu * tau2)).exp() / tau2,
        LossKind::PowerFamily => (e2 / tau2 / (2.0 - nu) + 1.0).powf(0.5 * nu - 1.0) / tau2,
        LossKind::SquareRoot => 1.0 / (tau2 * (1.0 + e2 / (nu * tau2)).sqrt()),
    }
}

pub(crate) fn kind_iota(kind: LossKind, nu: f64, tau2: f64, e: f64) -> f64 {
    let e2 = e * e;
    if nu >= GAUSSIAN_NU {
        return 0.0;
    }
    match kind {
        LossKind::StudentLog => -2.0 * nu / (nu * tau2 + e2).powi(2),
        LossKind::ExponentialWelsch => -(-e2 / (2.0 * nu * nu * tau2)).exp() / (nu * nu * tau2 * tau2),
        // d'(e) = (ν/2 − 1)·(2/(τ²(2−ν)))·(·)^{ν/2−2}·e/τ² = −(·)^{ν/2−2}·e/τ⁴
        LossKind::PowerFamily => -(e2 / tau2 / (2.0 - nu) + 1.0).powf(0.5 * nu - 2.0) / (tau2 * tau2),
        LossKind::SquareRoot => -(1.0 + e2 / (nu * tau2)).powf(-1.5) / (nu * tau2 * tau2),
    }
}

/// One loss per whitened channel: `n` process channels followed by `m`
/// measurement channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLosses {
    losses: Vec<RobustLoss>,
    n: usize,
}

impl ChannelLosses {
    pub fn new(losses: Vec<RobustLoss>, n: usize, m: usize) -> Result<Self> {
        if losses.len() != n + m {
            return Err(Error::Dimension(format!(
                "expected {} channel losses (n = {n}, m = {m}), got {}",
                n + m,
                losses.len()
            )));
        }
        for l in &losses {
            RobustLoss::new(l.kind, l.nu, l.tau2)?;
        }
        Ok(Self { losses, n })
    }

    pub fn gaussian(n: usize, m: usize) -> Self {
        Self { losses: vec![RobustLoss::gaussian(1.0); n + m], n }
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.losses.len() - self.n
    }

    pub fn get(&self, i: usize) -> &RobustLoss {
        &self.losses[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RobustLoss> {
        self.losses.iter()
    }

    pub fn process(&self) -> &[RobustLoss] {
        &self.losses[..self.n]
    }

    pub fn measurement(&self) -> &[RobustLoss] {
        &self.losses[self.n..]
    }

    /// Total loss `Σ_i J_i(e_i)`.
    pub fn total(&self, errors: &[f64]) -> f64 {
        self.losses.iter().zip(errors).map(|(l, &e)| l.value(e)).sum()
    }
}
