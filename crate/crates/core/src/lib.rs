//! Robust and adaptive Kalman filtering built on heavy-tailed losses.
//!
//! The crate is organized around six pieces:
//!
//! * [`statespace`]: linear models, noise descriptions and trajectory simulation.
//! * [`losses`]: the robust loss family (value, weight, weight derivative).
//! * [`filters`]: KF, the fixed-point robust filter, variational filters and
//!   the adaptive robust filters with forgetting and outlier switching.
//! * [`convergence`]: fixed-point convergence bounds and covariance-tracking
//!   predictions.
//! * [`bench`]: the three simulation studies, Monte Carlo panels and export.
//!
//! Whitened channel indexing is shared across modules: for a model with `n`
//! states and `m` measurements there are `l = n + m` scalar channels, the
//! first `n` being process (prior) channels and the last `m` measurement
//! channels.

pub mod bench;
pub mod convergence;
pub mod error;
pub mod filters;
pub mod linalg;
pub mod losses;
pub mod serde_mat;
pub mod statespace;

pub use error::{Error, Result};
