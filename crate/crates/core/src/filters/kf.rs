use nalgebra::{DMatrix, DVector};

use super::{FilterState, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg;
use crate::statespace::LinearModel;

/// Time update `x̂⁻ = A x̂ + B_u u`, `P⁻ = A P Aᵀ + Q`.
pub fn predict(model: &LinearModel, state: &FilterState, u: Option<&DVector<f64>>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = model.n();
    if state.x.len() != n || state.p.shape() != (n, n) {
        return Err(Error::Dimension(format!("filter state must have dimension {n}")));
    }
    let mut x = &model.a * &state.x;
    if let Some(u) = u {
        let b = model
            .b_u
            .as_ref()
            .ok_or_else(|| Error::Dimension("input given but model has no B_u".into()))?;
        if u.len() != b.ncols() {
            return Err(Error::Dimension(format!("input must have length {}", b.ncols())));
        }
        x += b * u;
    }
    let mut p = &model.a * &state.p * model.a.transpose() + &model.q;
    linalg::symmetrize(&mut p);
    Ok((x, p))
}

/// Joseph-form covariance `(I − KC) P⁻ (I − KC)ᵀ + K R Kᵀ`, re-symmetrized.
pub fn posterior_cov(p_prior: &DMatrix<f64>, gain: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p_prior.nrows();
    let ikc = DMatrix::identity(n, n) - gain * c;
    let mut p = &ikc * p_prior * ikc.transpose() + gain * r * gain.transpose();
    linalg::symmetrize(&mut p);
    p
}

/// Gain `P Cᵀ (C P Cᵀ + R)⁻¹` for symmetric `P` and `R`.
pub(crate) fn gain(p: &DMatrix<f64>, c: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = c * p * c.transpose() + r;
    linalg::symmetrize(&mut s);
    // K = P Cᵀ S⁻¹  ⇔  Kᵀ = S⁻¹ C P
    let kt = linalg::spd_solve(&s, &(c * p), "innovation covariance")?;
    Ok(kt.transpose())
}

/// Standard Kalman filter step with Joseph-form covariance update.
pub fn kf_step(
    model: &LinearModel,
    state: &FilterState,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
) -> Result<(FilterState, StepDiagnostics)> {
    let (x_prior, p_prior) = predict(model, state, u)?;
    if y.len() != model.m() {
        return Err(Error::Dimension(format!("measurement must have length {}", model.m())));
    }
    let k = gain(&p_prior, &model.c, &model.r)?;
    let innovation = y - &model.c * &x_prior;
    let x = &x_prior + &k * &innovation;
    let p = posterior_cov(&p_prior, &k, &model.c, &model.r);
    let l = model.channels();
    Ok((
        FilterState { x, p },
        StepDiagnostics {
            iterations: 1,
            errors: vec![0.0; l],
            lambdas: vec![1.0; l],
            reverted: vec![false; l],
            innovation,
        },
    ))
}
