use nalgebra::{DMatrix, DVector};

use super::kf::{posterior_cov, predict};
use super::{whiten, FilterState, FixedPointTol, StepDiagnostics, Whitened};
use crate::error::{Error, Result};
use crate::linalg;
use crate::losses::{ChannelLosses, RobustLoss};
use crate::statespace::LinearModel;

/// Iterates whose norm exceeds this are reported as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Largest channel variance `1/d(e)` admitted before the weight is treated
/// as numerically zero.
const LAMBDA_MAX: f64 = 1e150;

/// Result of the fixed-point measurement update.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub x: DVector<f64>,
    /// Modified gain `K̃` of the last pass.
    pub gain: DMatrix<f64>,
    pub iterations: usize,
    /// Channel variances `1/d(e)` behind the last gain.
    pub lambdas: Vec<f64>,
    pub converged: bool,
}

fn check_iterate(x: &DVector<f64>) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Divergence(format!(
            "fixed-point iterate left the admissible region (norm {norm:e}); increase nu"
        )));
    }
    Ok(())
}

fn step_small(x: &DVector<f64>, prev: &DVector<f64>, eps: f64) -> bool {
    (x - prev).norm() <= eps * x.norm()
}

pub(crate) fn channel_variance(d: f64) -> f64 {
    if d > 1.0 / LAMBDA_MAX {
        1.0 / d
    } else {
        LAMBDA_MAX
    }
}

/// `B diag(λ) Bᵀ`.
pub(crate) fn inflate(b: &DMatrix<f64>, lambdas: &[f64]) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (j, &l) in lambdas.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l);
    }
    let mut out = scaled * b.transpose();
    linalg::symmetrize(&mut out);
    out
}

/// Fixed-point measurement update in Kalman form.
///
/// Each pass evaluates the channel weights at the previous iterate (the
/// first pass at `x̂⁻`), inflates the prior and measurement covariances by
/// `1/d`, and recomputes the estimate from the prior. The count includes the
/// first pass, so a step whose weights barely move reports one iteration.
pub fn robust_update(
    wh: &Whitened,
    losses: &ChannelLosses,
    x_prior: &DVector<f64>,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    tol: FixedPointTol,
) -> Result<RobustSolution> {
    let n = wh.n();
    if losses.len() != wh.channels() || losses.n() != n {
        return Err(Error::Dimension(format!(
            "expected {} channel losses ({} process), got {}",
            wh.channels(),
            n,
            losses.len()
        )));
    }
    let innovation = y - c * x_prior;
    let mut prev = x_prior.clone();
    let mut lambdas = vec![1.0; wh.channels()];
    let mut gain = DMatrix::zeros(n, y.len());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < tol.max_iter {
        iterations += 1;
        let e = wh.residual(&prev);
        for (i, loss) in losses.iter().enumerate() {
            lambdas[i] = channel_variance(loss.weight(e[i]));
        }
        let p_tilde = inflate(&wh.bp, &lambdas[..n]);
        let r_tilde = inflate(&wh.br, &lambdas[n..]);
        gain = super::kf::gain(&p_tilde, c, &r_tilde)?;
        let x = x_prior + &gain * &innovation;
        check_iterate(&x)?;
        converged = step_small(&x, &prev, tol.eps);
        prev = x;
        if converged {
            break;
        }
    }
    Ok(RobustSolution { x: prev, gain, iterations, lambdas, converged })
}

/// Iterates of the normal-equation form `x = (Wᵀ D W)⁻¹ Wᵀ D t`.
#[derive(Debug, Clone)]
pub struct FixedPointTrace {
    pub x: DVector<f64>,
    /// Every iterate, starting with the initial point.
    pub iterates: Vec<DVector<f64>>,
    pub converged: bool,
}

impl FixedPointTrace {
    /// `‖x_{t+1} − x_t‖` for consecutive iterates.
    pub fn step_norms(&self) -> Vec<f64> {
        self.iterates.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect()
    }

    /// `‖x_{t+1} − x_t‖₁`, the norm in which the contraction bound is stated.
    pub fn step_norms_l1(&self) -> Vec<f64> {
        self.iterates.windows(2).map(|w| linalg::l1_norm(&(&w[1] - &w[0]))).collect()
    }
}

/// Fixed-point iteration on a whitened system with an arbitrary weight
/// function `weight(channel, e)`, started from `x0`.
pub fn solve_fixed_point_with<F>(
    w: &DMatrix<f64>,
    t: &DVector<f64>,
    weight: F,
    x0: &DVector<f64>,
    tol: FixedPointTol,
) -> Result<FixedPointTrace>
where
    F: Fn(usize, f64) -> f64,
{
    if w.nrows() != t.len() || w.ncols() != x0.len() {
        return Err(Error::Dimension("whitened system and start point disagree".into()));
    }
    let mut iterates = vec![x0.clone()];
    let mut converged = false;
    for _ in 0..tol.max_iter {
        let prev = iterates.last().unwrap();
        let e = t - w * prev;
        let mut dw = w.clone();
        let mut dt = t.clone();
        for i in 0..t.len() {
            let d = weight(i, e[i]);
            dw.row_mut(i).scale_mut(d);
            dt[i] *= d;
        }
        let mut gram = w.transpose() * dw;
        linalg::symmetrize(&mut gram);
        let rhs = w.transpose() * dt;
        let x = linalg::spd_solve(&gram, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()), "weighted Gram matrix")?
            .column(0)
            .into_owned();
        check_iterate(&x)?;
        converged = step_small(&x, prev, tol.eps);
        iterates.push(x);
        if converged {
            break;
        }
    }
    Ok(FixedPointTrace { x: iterates.last().unwrap().clone(), iterates, converged })
}

/// [`solve_fixed_point_with`] using one loss per channel.
pub fn solve_fixed_point(
    w: &DMatrix<f64>,
    t: &DVector<f64>,
    losses: &[RobustLoss],
    x0: &DVector<f64>,
    tol: FixedPointTol,
) -> Result<FixedPointTrace> {
    if losses.len() != t.len() {
        return Err(Error::Dimension(format!("expected {} losses, got {}", t.len(), losses.len())));
    }
    solve_fixed_point_with(w, t, |i, e| losses[i].weight(e), x0, tol)
}

/// One step of the Student's t based robust filter (generic over losses).
pub fn stkf_step(
    model: &LinearModel,
    state: &FilterState,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    losses: &ChannelLosses,
    tol: FixedPointTol,
) -> Result<(FilterState, StepDiagnostics)> {
    let (x_prior, p_prior) = predict(model, state, u)?;
    let wh = whiten(&x_prior, &p_prior, &model.r, y, &model.c)?;
    let sol = robust_update(&wh, losses, &x_prior, y, &model.c, tol)?;
    let p = posterior_cov(&p_prior, &sol.gain, &model.c, &model.r);
    let errors = wh.residual(&sol.x).iter().copied().collect();
    let l = wh.channels();
    Ok((
        FilterState { x: sol.x, p },
        StepDiagnostics {
            iterations: sol.iterations,
            errors,
            lambdas: sol.lambdas,
            reverted: vec![false; l],
            innovation: y - &model.c * &x_prior,
        },
    ))
}
