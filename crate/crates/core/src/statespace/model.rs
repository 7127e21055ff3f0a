use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::serde_mat;

/// Discrete linear system `x_{k+1} = A x_k + B_u u_k + w_k`, `y_k = C x_k + v_k`
/// with nominal noise covariances `Q` and `R`.
///
/// `Q` may be singular (a rank-deficient `B Bᵀ` is common when process noise
/// enters through an input channel); `R` must be positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(default, with = "serde_mat::option_matrix", skip_serializing_if = "Option::is_none")]
    pub b_u: Option<DMatrix<f64>>,
    #[serde(with = "serde_mat::matrix")]
    pub c: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub q: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix")]
    pub r: DMatrix<f64>,
    /// Sampling time in seconds. Only used to evaluate time-varying schedules.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

impl LinearModel {
    pub fn new(
        a: DMatrix<f64>,
        b_u: Option<DMatrix<f64>>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let model = Self { a, b_u, c, q, r, dt };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || !self.a.is_square() {
            return Err(Error::Dimension("A must be square and non-empty".into()));
        }
        let m = self.c.nrows();
        if m == 0 || self.c.ncols() != n {
            return Err(Error::Dimension(format!("C must be m x {n} with m > 0")));
        }
        if let Some(b) = &self.b_u {
            if b.nrows() != n || b.ncols() == 0 {
                return Err(Error::Dimension(format!("B_u must have {n} rows")));
            }
        }
        if self.q.shape() != (n, n) {
            return Err(Error::Dimension(format!("Q must be {n} x {n}")));
        }
        if self.r.shape() != (m, m) {
            return Err(Error::Dimension(format!("R must be {m} x {m}")));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if self.a.iter().chain(self.c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("A and C must be finite".into()));
        }
        linalg::check_psd(&self.q, "Q")?;
        linalg::check_spd(&self.r, "R")?;
        Ok(())
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Measurement dimension.
    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Input dimension, zero when the model has no input map.
    pub fn p(&self) -> usize {
        self.b_u.as_ref().map_or(0, |b| b.ncols())
    }

    /// Number of whitened channels, `n + m`.
    pub fn channels(&self) -> usize {
        self.n() + self.m()
    }
}
