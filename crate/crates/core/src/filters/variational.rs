use nalgebra::{DMatrix, DVector};

use super::adaptive::{ChannelHyper, TAU2_FLOOR};
use super::kf::{gain, posterior_cov, predict};
use super::robust::inflate;
use super::{whiten, FilterState, StepDiagnostics};
use crate::error::{Error, Result};
use crate::losses::GAUSSIAN_NU;
use crate::statespace::LinearModel;

struct VbOutcome {
    state: FilterState,
    lambdas: Vec<f64>,
    errors: Vec<f64>,
    /// Output of the last variance update.
    next: Vec<f64>,
}

/// Coupled state/variance iteration shared by both VB filters. `update`
/// receives the measurement-channel residuals and `[W P Wᵀ]_ii` terms and
/// returns the variances for the next pass.
fn vb_iterate<F>(
    model: &LinearModel,
    x_prior: &DVector<f64>,
    p_prior: &DMatrix<f64>,
    y: &DVector<f64>,
    mut lambdas: Vec<f64>,
    iterations: usize,
    mut update: F,
) -> Result<VbOutcome>
where
    F: FnMut(&[f64], &[f64]) -> Vec<f64>,
{
    let n = model.n();
    let m = model.m();
    let wh = whiten(x_prior, p_prior, &model.r, y, &model.c)?;
    let innovation = y - &model.c * x_prior;
    let mut state = FilterState { x: x_prior.clone(), p: p_prior.clone() };
    let mut used = lambdas.clone();
    for _ in 0..iterations {
        let r_tilde = inflate(&wh.br, &lambdas);
        let k = gain(p_prior, &model.c, &r_tilde)?;
        let x = x_prior + &k * &innovation;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence("variational update produced a non-finite state".into()));
        }
        let p = posterior_cov(p_prior, &k, &model.c, &r_tilde);
        let e: Vec<f64> = wh.residual(&x).iter().skip(n).copied().collect();
        let wpw: Vec<f64> = wh.projected_diag(&p).into_iter().skip(n).collect();
        state = FilterState { x, p };
        used = lambdas;
        lambdas = update(&e, &wpw);
        debug_assert_eq!(lambdas.len(), m);
    }
    let mut errors = vec![0.0; n];
    errors.extend(wh.residual(&state.x).iter().skip(n));
    let mut all = vec![1.0; n];
    all.extend(used);
    Ok(VbOutcome { state, lambdas: all, errors, next: lambdas })
}

fn diagnostics(out: &VbOutcome, iterations: usize, innovation: DVector<f64>) -> StepDiagnostics {
    StepDiagnostics {
        iterations,
        errors: out.errors.clone(),
        lambdas: out.lambdas.clone(),
        reverted: vec![false; out.lambdas.len()],
        innovation,
    }
}

/// Variational filter with fixed inverse-Gamma priors on the whitened
/// measurement-channel variances (`a = ν/2`, `b = ντ²/2`).
///
/// Each of the `iterations` passes updates the state with the current
/// variances, recomputes `P`, then sets
/// `λ_i = (ν_i τ_i² + e_i² + [W P Wᵀ]_ii)/(ν_i + 1)`.
pub fn vbkf_fixed_step(
    model: &LinearModel,
    state: &FilterState,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    nu: &[f64],
    tau2: &[f64],
    iterations: usize,
) -> Result<(FilterState, StepDiagnostics)> {
    let m = model.m();
    if nu.len() != m || tau2.len() != m {
        return Err(Error::Dimension(format!("expected {m} measurement-channel priors")));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("variational iteration count must be >= 1".into()));
    }
    let (x_prior, p_prior) = predict(model, state, u)?;
    let out = vb_iterate(model, &x_prior, &p_prior, y, tau2.to_vec(), iterations, |e, wpw| {
        (0..m)
            .map(|i| {
                if nu[i] >= GAUSSIAN_NU {
                    tau2[i]
                } else {
                    (nu[i] * tau2[i] + e[i] * e[i] + wpw[i]) / (nu[i] + 1.0)
                }
            })
            .collect()
    })?;
    let innovation = y - &model.c * &x_prior;
    let diag = diagnostics(&out, iterations, innovation);
    Ok((out.state, diag))
}

/// Variational adaptive filter with forgetting on the measurement-channel
/// variances. `hyper` holds one entry per measurement channel; between
/// steps the accumulated evidence `ν` is discounted by `ρ` while the scale
/// estimate is carried over.
pub fn vbkf_step(
    model: &LinearModel,
    state: &FilterState,
    hyper: &ChannelHyper,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    iterations: usize,
) -> Result<(FilterState, StepDiagnostics, ChannelHyper)> {
    let m = model.m();
    if hyper.len() != m {
        return Err(Error::Dimension(format!("expected {m} measurement-channel hyperparameters")));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("variational iteration count must be >= 1".into()));
    }
    let nu_prior: Vec<f64> = (0..m).map(|i| hyper.rho[i] * hyper.nu[i]).collect();
    let tau2_prior = hyper.tau2.clone();
    let (x_prior, p_prior) = predict(model, state, u)?;
    let out = vb_iterate(model, &x_prior, &p_prior, y, tau2_prior.clone(), iterations, |e, wpw| {
        (0..m)
            .map(|i| {
                let v = (nu_prior[i] * tau2_prior[i] + e[i] * e[i] + wpw[i]) / (nu_prior[i] + 1.0);
                v.max(TAU2_FLOOR)
            })
            .collect()
    })?;
    let mut next = hyper.clone();
    for i in 0..m {
        next.nu[i] = nu_prior[i] + 1.0;
        next.tau2[i] = out.next[i];
    }
    let innovation = y - &model.c * &x_prior;
    let diag = diagnostics(&out, iterations, innovation);
    Ok((out.state, diag, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::kf_step;

    fn model() -> LinearModel {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        LinearModel::new(a, None, c, DMatrix::identity(2, 2) * 0.01, DMatrix::from_element(1, 1, 0.2), 0.1).unwrap()
    }

    #[test]
    fn gaussian_prior_reproduces_kf() {
        let model = model();
        let s0 = FilterState::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let y = DVector::from_element(1, 3.0);
        let (kf, _) = kf_step(&model, &s0, None, &y).unwrap();
        let (vb, d) = vbkf_fixed_step(&model, &s0, None, &y, &[1e8], &[1.0], 4).unwrap();
        assert!((kf.x - vb.x).amax() < 1e-12);
        assert_eq!(d.iterations, 4);
    }

    #[test]
    fn outlier_inflates_variance() {
        let model = model();
        let s0 = FilterState::new(DVector::zeros(2), DMatrix::identity(2, 2) * 0.01).unwrap();
        let y = DVector::from_element(1, 20.0);
        let (_, d) = vbkf_fixed_step(&model, &s0, None, &y, &[4.0], &[1.0], 4).unwrap();
        assert!(d.lambdas[2] > 10.0);
        let (kf, _) = kf_step(&model, &s0, None, &y).unwrap();
        let (vb, _) = vbkf_fixed_step(&model, &s0, None, &y, &[4.0], &[1.0], 4).unwrap();
        assert!(vb.x[0].abs() < kf.x[0].abs());
    }

    #[test]
    fn forgetting_reaches_steady_dof() {
        let model = model();
        let mut s = FilterState::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let mut h = ChannelHyper::new(vec![1.0], vec![1.0], vec![0.9]).unwrap();
        for _ in 0..400 {
            let out = vbkf_step(&model, &s, &h, None, &DVector::zeros(1), 2).unwrap();
            s = out.0;
            h = out.2;
        }
        assert!((h.nu[0] - 10.0).abs() < 1e-9);
    }
}
