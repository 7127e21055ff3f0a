use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Whitened regression `t = W x + ζ` built from the prior and a measurement.
#[derive(Debug, Clone)]
pub struct Whitened {
    /// Stacked whitened data `(B_p⁻¹ x̂⁻; B_r⁻¹ y)`, length `n + m`.
    pub t: DVector<f64>,
    /// Stacked regressor `(B_p⁻¹; B_r⁻¹ C)`, `(n + m) × n`.
    pub w: DMatrix<f64>,
    /// `B_p B_pᵀ = P⁻`.
    pub bp: DMatrix<f64>,
    /// `B_r B_rᵀ = R*`.
    pub br: DMatrix<f64>,
}

impl Whitened {
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    pub fn channels(&self) -> usize {
        self.t.len()
    }

    /// Whitened residual `t − W x`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.t - &self.w * x
    }

    /// Diagonal of `W P Wᵀ`.
    pub fn projected_diag(&self, p: &DMatrix<f64>) -> Vec<f64> {
        let wp = &self.w * p;
        (0..self.w.nrows())
            .map(|i| wp.row(i).dot(&self.w.row(i)))
            .collect()
    }
}

/// Builds the whitened system from `x̂⁻`, `P⁻`, `R*`, `y` and `C`.
pub fn whiten(
    x_prior: &DVector<f64>,
    p_prior: &DMatrix<f64>,
    r_star: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
) -> Result<Whitened> {
    let n = x_prior.len();
    let m = y.len();
    if p_prior.shape() != (n, n) || r_star.shape() != (m, m) || c.shape() != (m, n) {
        return Err(Error::Dimension(format!("whitening expects n = {n}, m = {m}")));
    }
    let bp = linalg::sqrt_factor(p_prior, "prior covariance")?;
    let br = linalg::sqrt_factor(r_star, "measurement covariance")?;
    let bp_inv = linalg::factor_inverse(&bp, "prior covariance factor")?;
    let br_inv = linalg::factor_inverse(&br, "measurement covariance factor")?;

    let mut t = DVector::zeros(n + m);
    t.rows_mut(0, n).copy_from(&(&bp_inv * x_prior));
    t.rows_mut(n, m).copy_from(&(&br_inv * y));
    let mut w = DMatrix::zeros(n + m, n);
    w.rows_mut(0, n).copy_from(&bp_inv);
    w.rows_mut(n, m).copy_from(&(&br_inv * c));
    Ok(Whitened { t, w, bp, br })
}
