//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Substitute for exactly-zero variances so that factorizations stay defined.
pub const COVARIANCE_FLOOR: f64 = 1e-30;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

/// Replaces exactly-zero diagonal entries by [`COVARIANCE_FLOOR`].
pub fn floor_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        if out[(i, i)] == 0.0 {
            out[(i, i)] = COVARIANCE_FLOOR;
        }
    }
    out
}

/// Checks symmetry (to `1e-12` relative) and strict positive definiteness.
pub fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{name} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    if !is_symmetric(m, 1e-12 * scale) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() || min_eigenvalue(m) <= 0.0 {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    Ok(())
}

/// Like [`check_spd`] but admits singular (positive semi-definite) matrices.
pub fn check_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{name} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    if !is_symmetric(m, 1e-12 * scale) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if min_eigenvalue(m) < -1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("{name} has a negative eigenvalue")));
    }
    Ok(())
}

/// Returns `B` with `B Bᵀ = m`.
///
/// The lower Cholesky factor is preferred. When Cholesky fails the symmetric
/// eigen square root `V diag(√λ)` is used instead; non-positive eigenvalues
/// are a hard error.
pub fn sqrt_factor(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d)
}

/// Square-root factor for sampling: accepts semi-definite matrices by
/// clamping tiny negative eigenvalues to zero.
pub fn sampling_factor(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let floored = floor_covariance(m);
    if let Some(chol) = floored.clone().cholesky() {
        return Ok(chol.l());
    }
    check_psd(&floored, name)?;
    let mut s = floored;
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d)
}

/// Solves `m x = b` for a symmetric positive-definite `m`, falling back to LU.
pub fn spd_solve(m: &DMatrix<f64>, b: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(name.to_string()))
}

/// Inverse of a lower-triangular matrix or of a general square factor.
pub fn factor_inverse(b: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let eye = DMatrix::identity(n, n);
    if b.upper_triangle() == DMatrix::from_diagonal(&b.diagonal()) {
        if let Some(inv) = b.solve_lower_triangular(&eye) {
            return Ok(inv);
        }
    }
    b.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(name.to_string()))
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Induced matrix 1-norm (maximum absolute column sum).
pub fn induced_l1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
