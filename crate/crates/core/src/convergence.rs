//! Convergence bounds for the fixed-point update and covariance-tracking
//! predictions for the adaptive filters.
//!
//! The bounds concern the whitened system `t = W x + ζ` under the Student
//! loss. For a radius `γ` of the ℓ₁ ball, `ν*` makes the fixed-point map a
//! self-map of the ball and `ν⁺` bounds its Jacobian by `η`; any common
//! `ν ≥ max(ν*, ν⁺)` gives a contraction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Whitened;
use crate::linalg;
use crate::losses::{kind_iota, kind_value, kind_weight, LossKind};

const NU_LO: f64 = 1e-9;
const NU_HI: f64 = 1e12;
const NU_CEILING: f64 = 1e300;
/// Final bracket width in `ln ν`; keeps `ν*(1 − 1e-6)` outside the root.
const ROOT_LOG_WIDTH: f64 = 1e-10;

/// One whitened instance plus the ball radius `γ` and contraction target `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub w: DMatrix<f64>,
    pub t: DVector<f64>,
    pub tau2: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
}

impl BoundInputs {
    pub fn new(w: DMatrix<f64>, t: DVector<f64>, tau2: Vec<f64>, gamma: f64, eta: f64) -> Result<Self> {
        if w.nrows() != t.len() || tau2.len() != t.len() {
            return Err(Error::Dimension(format!(
                "W has {} rows, t has {} entries, tau2 has {}",
                w.nrows(),
                t.len(),
                tau2.len()
            )));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1), got {eta}")));
        }
        if tau2.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("tau2 entries must be positive".into()));
        }
        Ok(Self { w, t, tau2, gamma, eta })
    }

    pub fn from_whitened(wh: &Whitened, tau2: Vec<f64>, gamma: f64, eta: f64) -> Result<Self> {
        Self::new(wh.w.clone(), wh.t.clone(), tau2, gamma, eta)
    }

    /// Same instance with another radius.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.w.clone(), self.t.clone(), self.tau2.clone(), gamma, self.eta)
    }

    fn n(&self) -> usize {
        self.w.ncols()
    }

    fn row_l1(&self, i: usize) -> f64 {
        self.w.row(i).iter().map(|v| v.abs()).sum()
    }

    /// `λ_min(Σ c_i w_iᵀ w_i)`.
    fn weighted_gram_min(&self, coef: impl Fn(usize) -> f64) -> f64 {
        let n = self.n();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..self.t.len() {
            let row = self.w.row(i);
            g += row.transpose() * row * coef(i);
        }
        linalg::symmetrize(&mut g);
        linalg::min_eigenvalue(&g)
    }

    fn worst_error(&self, i: usize) -> f64 {
        self.gamma * self.row_l1(i) + self.t[i].abs()
    }

    fn student_weight(&self, nu: f64, i: usize) -> f64 {
        kind_weight(LossKind::StudentLog, nu, self.tau2[i], self.worst_error(i))
    }
}

/// Lower bound `ξ` on admissible radii.
pub fn xi_lower_bound(inp: &BoundInputs) -> Result<f64> {
    let lmin = inp.weighted_gram_min(|_| 1.0);
    if !(lmin > 0.0) {
        return Err(Error::Singular("whitened Gram matrix has no positive minimum eigenvalue".into()));
    }
    let num: f64 = (0..inp.t.len()).map(|i| inp.t[i].abs() * inp.row_l1(i) / inp.tau2[i]).sum();
    Ok((inp.n() as f64).sqrt() * num / lmin)
}

/// Self-map bound `φ(ν)`; the map sends the γ-ball into itself once
/// `φ(ν) ≤ γ`.
pub fn phi(nu: f64, inp: &BoundInputs) -> f64 {
    let num: f64 = (0..inp.t.len()).map(|i| inp.t[i].abs() * inp.row_l1(i) / inp.tau2[i]).sum();
    let lmin = inp.weighted_gram_min(|i| inp.student_weight(nu, i));
    (inp.n() as f64).sqrt() * num / lmin
}

/// Jacobian bound `ψ(ν)`.
pub fn psi(nu: f64, inp: &BoundInputs) -> f64 {
    let num: f64 = (0..inp.t.len())
        .map(|i| {
            let row = inp.w.row(i);
            let wl1 = inp.row_l1(i);
            let outer = linalg::induced_l1(&(row.transpose() * row));
            (inp.worst_error(i) / inp.tau2[i].powi(2)) * wl1 * (inp.gamma * outer + inp.t[i].abs() * wl1)
        })
        .sum();
    let lmin = inp.weighted_gram_min(|i| inp.student_weight(nu, i));
    2.0 * (inp.n() as f64).sqrt() * num / (nu * lmin)
}

/// Upper end of a log-space bisection bracket around `f(ν) = target` for a
/// decreasing `f`, so `f(ν) ≤ target` holds at the returned value. The
/// bracket grows past `1e12` when the root lies beyond it.
fn solve_decreasing(f: impl Fn(f64) -> f64, target: f64, what: &str) -> Result<f64> {
    let mut lo = NU_LO;
    let mut hi = NU_HI;
    if f(lo) <= target {
        return Ok(lo);
    }
    while !(f(hi) <= target) {
        if hi >= NU_CEILING {
            return Err(Error::NoSolution(format!("{what} stays above {target:e} for every nu up to {hi:e}")));
        }
        lo = hi;
        hi *= 1e3;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        if f(mid.exp()) <= target {
            b = mid;
        } else {
            a = mid;
        }
        if b - a < ROOT_LOG_WIDTH {
            break;
        }
    }
    Ok(b.exp())
}

/// `ν*` with `φ(ν*) = γ`. Requires `γ > ξ`.
pub fn solve_nu_star(inp: &BoundInputs) -> Result<f64> {
    let xi = xi_lower_bound(inp)?;
    if inp.gamma <= xi {
        return Err(Error::NoSolution(format!("gamma = {} does not exceed xi = {xi}", inp.gamma)));
    }
    solve_decreasing(|nu| phi(nu, inp), inp.gamma, "phi")
}

/// `ν⁺` with `ψ(ν⁺) = η`.
pub fn solve_nu_plus(inp: &BoundInputs) -> Result<f64> {
    xi_lower_bound(inp)?;
    solve_decreasing(|nu| psi(nu, inp), inp.eta, "psi")
}

/// Bounds of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub xi: f64,
    pub nu_star: f64,
    pub nu_plus: f64,
}

impl BoundReport {
    /// Common degrees of freedom sufficient for contraction.
    pub fn nu_required(&self) -> f64 {
        self.nu_star.max(self.nu_plus)
    }

    pub fn satisfied_by(&self, nu: f64) -> bool {
        nu >= self.nu_required()
    }
}

/// `ξ`, `ν*`, `ν⁺` for one instance.
pub fn required_nu(inp: &BoundInputs) -> Result<BoundReport> {
    Ok(BoundReport { xi: xi_lower_bound(inp)?, nu_star: solve_nu_star(inp)?, nu_plus: solve_nu_plus(inp)? })
}

/// Worst case over a sequence of instances (e.g. every step of a run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub steps: usize,
    pub max_xi: f64,
    pub max_nu_star: f64,
    pub max_nu_plus: f64,
    /// Index of the instance with the largest `max(ν*, ν⁺)`.
    pub worst_step: usize,
}

impl ScanReport {
    pub fn nu_required(&self) -> f64 {
        self.max_nu_star.max(self.max_nu_plus)
    }
}

pub fn scan_bounds<'a, I>(instances: I) -> Result<ScanReport>
where
    I: IntoIterator<Item = &'a BoundInputs>,
{
    let mut out = ScanReport { steps: 0, max_xi: 0.0, max_nu_star: 0.0, max_nu_plus: 0.0, worst_step: 0 };
    let mut worst = f64::NEG_INFINITY;
    for (k, inp) in instances.into_iter().enumerate() {
        let r = required_nu(inp).map_err(|e| match e {
            Error::NoSolution(msg) => Error::NoSolution(format!("step {k}: {msg}")),
            other => other,
        })?;
        out.steps += 1;
        out.max_xi = out.max_xi.max(r.xi);
        out.max_nu_star = out.max_nu_star.max(r.nu_star);
        out.max_nu_plus = out.max_nu_plus.max(r.nu_plus);
        if r.nu_required() > worst {
            worst = r.nu_required();
            out.worst_step = k;
        }
    }
    if out.steps == 0 {
        return Err(Error::InvalidParameter("no instances to scan".into()));
    }
    Ok(out)
}

/// A loss given by its value, weight and weight-derivative factor.
pub trait LossFamily {
    fn name(&self) -> String;
    fn value(&self, nu: f64, tau2: f64, e: f64) -> f64;
    fn weight(&self, nu: f64, tau2: f64, e: f64) -> f64;
    fn iota(&self, nu: f64, tau2: f64, e: f64) -> f64;
    /// Whether `ν` is in the family's domain.
    fn admits(&self, nu: f64) -> bool {
        nu > 0.0
    }
}

impl LossFamily for LossKind {
    fn name(&self) -> String {
        LossKind::name(*self).to_string()
    }

    fn value(&self, nu: f64, tau2: f64, e: f64) -> f64 {
        kind_value(*self, nu, tau2, e)
    }

    fn weight(&self, nu: f64, tau2: f64, e: f64) -> f64 {
        kind_weight(*self, nu, tau2, e)
    }

    fn iota(&self, nu: f64, tau2: f64, e: f64) -> f64 {
        kind_iota(*self, nu, tau2, e)
    }

    fn admits(&self, nu: f64) -> bool {
        nu > 0.0 && (*self != LossKind::PowerFamily || nu < 2.0)
    }
}

/// Sample points for [`check_loss_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid {
    /// Ascending degrees of freedom.
    pub nus: Vec<f64>,
    pub tau2s: Vec<f64>,
    pub errors: Vec<f64>,
    /// Degrees of freedom standing in for `ν → 0⁺`.
    pub vanishing_nu: f64,
    /// Largest admissible `τ²·d` at `vanishing_nu` for `|e| ≥ 0.25`.
    pub vanishing_tol: f64,
    /// Largest admissible `|ι|`.
    pub iota_bound: f64,
}

impl Default for LossGrid {
    fn default() -> Self {
        let base = [0.0, 1e-6, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0];
        let mut errors: Vec<f64> = base.iter().flat_map(|&e| [e, -e]).collect();
        errors.dedup();
        Self {
            nus: vec![0.5, 1.0, 1.5, 1.9, 4.0, 100.0],
            tau2s: vec![0.5, 1.0, 2.0],
            errors,
            vanishing_nu: 1e-6,
            vanishing_tol: 0.01,
            iota_bound: 1e8,
        }
    }
}

/// Outcome of one sampled check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    /// Condition number (1–3) the check belongs to.
    pub condition: u8,
    pub name: String,
    pub passed: bool,
    /// First violating sample, if any.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub loss: String,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn condition_passed(&self, condition: u8) -> bool {
        self.checks.iter().filter(|c| c.condition == condition).all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(condition: u8, name: &str, witness: Option<String>) -> ConditionCheck {
    ConditionCheck { condition, name: name.to_string(), passed: witness.is_none(), witness }
}

/// Samples the sufficient conditions for fixed-point solvability:
/// (1) `J` even, minimal at 0 and non-decreasing in `|e|`;
/// (2) `0 ≤ d ≤ 1/τ²`, `d` non-decreasing in `ν` and vanishing as `ν → 0⁺`;
/// (3) `ι` bounded.
pub fn check_family_conditions<F: LossFamily + ?Sized>(family: &F, grid: &LossGrid) -> ConditionReport {
    let nus: Vec<f64> = grid.nus.iter().copied().filter(|&nu| family.admits(nu)).collect();
    let mut abs_errors: Vec<f64> = grid.errors.iter().map(|e| e.abs()).collect();
    abs_errors.sort_by(f64::total_cmp);
    abs_errors.dedup();

    let mut shape = None;
    let mut bounded = None;
    let mut monotone_nu = None;
    let mut vanishing = None;
    let mut iota = None;
    for &tau2 in &grid.tau2s {
        for &nu in &nus {
            let j0 = family.value(nu, tau2, 0.0);
            let mut prev = f64::NEG_INFINITY;
            for &e in &abs_errors {
                let j = family.value(nu, tau2, e);
                let jm = family.value(nu, tau2, -e);
                let slack = 1e-12 * j.abs().max(1.0);
                if shape.is_none() && (j + slack < prev || j + slack < j0 || (j - jm).abs() > slack || !j.is_finite()) {
                    shape = Some(format!("nu={nu}, tau2={tau2}, e={e}: J={j}, J(-e)={jm}, J(0)={j0}"));
                }
                prev = j;
            }
            for &e in &grid.errors {
                let d = family.weight(nu, tau2, e);
                if bounded.is_none() && !(d >= 0.0 && d <= (1.0 + 1e-12) / tau2) {
                    bounded = Some(format!("nu={nu}, tau2={tau2}, e={e}: d={d}, 1/tau2={}", 1.0 / tau2));
                }
                let i = family.iota(nu, tau2, e);
                if iota.is_none() && !(i.is_finite() && i.abs() <= grid.iota_bound) {
                    iota = Some(format!("nu={nu}, tau2={tau2}, e={e}: iota={i}"));
                }
            }
        }
        for &e in grid.errors.iter().filter(|e| **e != 0.0) {
            for pair in nus.windows(2) {
                let (d0, d1) = (family.weight(pair[0], tau2, e), family.weight(pair[1], tau2, e));
                if monotone_nu.is_none() && d1 < d0 * (1.0 - 1e-12) {
                    monotone_nu = Some(format!("tau2={tau2}, e={e}: d(nu={})={d0} > d(nu={})={d1}", pair[0], pair[1]));
                }
            }
            if e.abs() >= 0.25 && family.admits(grid.vanishing_nu) {
                let d = family.weight(grid.vanishing_nu, tau2, e);
                if vanishing.is_none() && !(tau2 * d <= grid.vanishing_tol) {
                    vanishing = Some(format!("nu={}, tau2={tau2}, e={e}: tau2*d={}", grid.vanishing_nu, tau2 * d));
                }
            }
        }
    }
    ConditionReport {
        loss: family.name(),
        checks: vec![
            check(1, "even, minimal at zero, non-decreasing in |e|", shape),
            check(2, "0 <= d <= 1/tau2", bounded),
            check(2, "d non-decreasing in nu", monotone_nu),
            check(2, "d vanishes as nu -> 0+", vanishing),
            check(3, "iota bounded", iota),
        ],
    }
}

/// [`check_family_conditions`] for one of the built-in losses.
pub fn check_loss_conditions(kind: LossKind, grid: &LossGrid) -> ConditionReport {
    check_family_conditions(&kind, grid)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("forgetting factor must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// Steady-state degrees of freedom `1/(1−ρ)` of an adaptive channel.
pub fn steady_dof(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(1.0 / (1.0 - rho))
}

/// Predicted behaviour of an adapted channel variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingPrediction {
    pub rho: f64,
    pub steady_mean: f64,
    pub steady_var: f64,
    /// In steps.
    pub time_constant: f64,
}

impl TrackingPrediction {
    /// Remaining tracking error `p` steps after a jump of size `δ₀`.
    pub fn transient(&self, delta0: f64, p: u32) -> f64 {
        delta0 * self.rho.powi(p as i32)
    }
}

/// Steady-state mean `Σ_g + 2·wPw` and variance `2(1−ρ)Σ²/(1+ρ)`,
/// `Σ = Σ_g + wPw`, of the adapted variance under a constant true variance
/// `Σ_g`.
pub fn steady_lambda_stats(rho: f64, sigma_g: f64, wpw: f64) -> Result<TrackingPrediction> {
    check_rho(rho)?;
    if !(sigma_g > 0.0) || !(wpw >= 0.0) {
        return Err(Error::InvalidParameter("need sigma_g > 0 and wPw >= 0".into()));
    }
    let sigma = sigma_g + wpw;
    Ok(TrackingPrediction {
        rho,
        steady_mean: sigma_g + 2.0 * wpw,
        steady_var: 2.0 * (1.0 - rho) * sigma * sigma / (1.0 + rho),
        time_constant: time_constant(rho)?,
    })
}

/// Tracking time constant `−1/ln ρ` in steps.
pub fn time_constant(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(-1.0 / rho.ln())
}

/// `δ₀ ρᵖ`.
pub fn transient(delta0: f64, rho: f64, p: u32) -> Result<f64> {
    check_rho(rho)?;
    Ok(delta0 * rho.powi(p as i32))
}

/// Gaussian approximation `(μ, σ²) = (τ², 2ν²τ⁴/(ν+1)³)` of
/// `Inv-Gamma(ν/2, ντ²/2)` obtained by expanding at `ντ²/(ν+1)`.
pub fn laplace_gaussian(nu: f64, tau2: f64) -> Result<(f64, f64)> {
    if !(nu > 0.0) || !(tau2 > 0.0) {
        return Err(Error::InvalidParameter("need nu > 0 and tau2 > 0".into()));
    }
    Ok((tau2, 2.0 * nu * nu * tau2 * tau2 / (nu + 1.0).powi(3)))
}
