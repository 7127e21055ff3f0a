use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::serde_mat;

/// Scalar multiplier applied to a base covariance as a function of the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Schedule {
    /// `(1 + 2|sin(0.1π t)|)²` with `t = k·dt`.
    SinAbs,
    /// `2 sin²(0.04π t) + 1` with `t = k·dt`.
    SinSq,
    /// Piecewise-constant levels. `levels[0]` applies up to and including
    /// `switches[0]`, `levels[i]` applies for `switches[i-1] < k <= switches[i]`
    /// and the last level applies after the last switch.
    Step { levels: Vec<f64>, switches: Vec<usize> },
}

impl Schedule {
    pub fn multiplier(&self, k: usize, dt: f64) -> f64 {
        let t = k as f64 * dt;
        match self {
            Schedule::SinAbs => (1.0 + 2.0 * (0.1 * PI * t).sin().abs()).powi(2),
            Schedule::SinSq => 2.0 * (0.04 * PI * t).sin().powi(2) + 1.0,
            Schedule::Step { levels, switches } => {
                let idx = switches.iter().take_while(|&&s| k > s).count();
                levels[idx]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Schedule::Step { levels, switches } = self {
            if levels.len() != switches.len() + 1 {
                return Err(Error::InvalidParameter(
                    "step schedule needs exactly one more level than switches".into(),
                ));
            }
            if switches.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(
                    "step schedule switch indices must be strictly increasing".into(),
                ));
            }
            if levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                return Err(Error::InvalidParameter("step schedule levels must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Description of a zero-mean noise source.
///
/// Leaves carry `maps_through_input`: when set, draws have the input
/// dimension and enter the state through the model's `B_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    FixedGaussian {
        #[serde(with = "serde_mat::matrix")]
        cov: DMatrix<f64>,
        #[serde(default)]
        maps_through_input: bool,
    },
    /// Draws `nominal` with probability `epsilon`, `outlier` otherwise.
    Mixture {
        epsilon: f64,
        nominal: Box<NoiseSpec>,
        outlier: Box<NoiseSpec>,
    },
    TimeVarying {
        schedule: Schedule,
        #[serde(with = "serde_mat::matrix")]
        base_cov: DMatrix<f64>,
        #[serde(default)]
        maps_through_input: bool,
    },
}

impl NoiseSpec {
    pub fn gaussian(cov: DMatrix<f64>) -> Self {
        NoiseSpec::FixedGaussian { cov, maps_through_input: false }
    }

    pub fn scalar(var: f64) -> Self {
        Self::gaussian(DMatrix::from_element(1, 1, var))
    }

    pub fn time_varying(schedule: Schedule, base_cov: DMatrix<f64>) -> Self {
        NoiseSpec::TimeVarying { schedule, base_cov, maps_through_input: false }
    }

    pub fn mixture(epsilon: f64, nominal: NoiseSpec, outlier: NoiseSpec) -> Self {
        NoiseSpec::Mixture {
            epsilon,
            nominal: Box::new(nominal),
            outlier: Box::new(outlier),
        }
    }

    /// Marks every leaf as entering through the input map.
    pub fn through_input(self) -> Self {
        match self {
            NoiseSpec::FixedGaussian { cov, .. } => NoiseSpec::FixedGaussian { cov, maps_through_input: true },
            NoiseSpec::TimeVarying { schedule, base_cov, .. } => NoiseSpec::TimeVarying {
                schedule,
                base_cov,
                maps_through_input: true,
            },
            NoiseSpec::Mixture { epsilon, nominal, outlier } => NoiseSpec::Mixture {
                epsilon,
                nominal: Box::new(nominal.through_input()),
                outlier: Box::new(outlier.through_input()),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::FixedGaussian { cov, .. } => cov.nrows(),
            NoiseSpec::TimeVarying { base_cov, .. } => base_cov.nrows(),
            NoiseSpec::Mixture { nominal, .. } => nominal.dim(),
        }
    }

    pub fn maps_through_input(&self) -> bool {
        match self {
            NoiseSpec::FixedGaussian { maps_through_input, .. }
            | NoiseSpec::TimeVarying { maps_through_input, .. } => *maps_through_input,
            NoiseSpec::Mixture { nominal, .. } => nominal.maps_through_input(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::FixedGaussian { cov, .. } => linalg::check_psd(cov, "noise covariance"),
            NoiseSpec::TimeVarying { schedule, base_cov, .. } => {
                schedule.validate()?;
                linalg::check_psd(base_cov, "noise base covariance")
            }
            NoiseSpec::Mixture { epsilon, nominal, outlier } => {
                if !(*epsilon > 0.0 && *epsilon <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "mixture epsilon must lie in (0, 1], got {epsilon}"
                    )));
                }
                nominal.validate()?;
                outlier.validate()?;
                if nominal.dim() != outlier.dim() {
                    return Err(Error::Dimension("mixture components differ in dimension".into()));
                }
                if nominal.maps_through_input() != outlier.maps_through_input() {
                    return Err(Error::InvalidParameter(
                        "mixture components disagree on maps_through_input".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Covariance of the nominal (non-outlier) component at step `k`.
    pub fn nominal_cov(&self, k: usize, dt: f64) -> DMatrix<f64> {
        match self {
            NoiseSpec::FixedGaussian { cov, .. } => cov.clone(),
            NoiseSpec::TimeVarying { schedule, base_cov, .. } => base_cov * schedule.multiplier(k, dt),
            NoiseSpec::Mixture { nominal, .. } => nominal.nominal_cov(k, dt),
        }
    }

    /// Covariance of the full (mixture-averaged) distribution at step `k`.
    pub fn total_cov(&self, k: usize, dt: f64) -> DMatrix<f64> {
        match self {
            NoiseSpec::Mixture { epsilon, nominal, outlier } => {
                nominal.total_cov(k, dt) * *epsilon + outlier.total_cov(k, dt) * (1.0 - epsilon)
            }
            _ => self.nominal_cov(k, dt),
        }
    }
}

/// One noise draw with bookkeeping for diagnostics.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub value: DVector<f64>,
    /// Whether any mixture along the path selected its outlier branch.
    pub outlier: bool,
}

/// A [`NoiseSpec`] with precomputed square-root factors.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    Gaussian { factor: DMatrix<f64> },
    Scheduled { schedule: Schedule, factor: DMatrix<f64> },
    Mixture { epsilon: f64, nominal: Box<NoiseSampler>, outlier: Box<NoiseSampler> },
}

impl NoiseSampler {
    pub fn new(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Self::build(spec)
    }

    fn build(spec: &NoiseSpec) -> Result<Self> {
        Ok(match spec {
            NoiseSpec::FixedGaussian { cov, .. } => NoiseSampler::Gaussian {
                factor: linalg::sampling_factor(cov, "noise covariance")?,
            },
            NoiseSpec::TimeVarying { schedule, base_cov, .. } => NoiseSampler::Scheduled {
                schedule: schedule.clone(),
                factor: linalg::sampling_factor(base_cov, "noise base covariance")?,
            },
            NoiseSpec::Mixture { epsilon, nominal, outlier } => NoiseSampler::Mixture {
                epsilon: *epsilon,
                nominal: Box::new(Self::build(nominal)?),
                outlier: Box::new(Self::build(outlier)?),
            },
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, k: usize, dt: f64, rng: &mut R) -> NoiseDraw {
        match self {
            NoiseSampler::Gaussian { factor } => NoiseDraw {
                value: gaussian(factor, 1.0, rng),
                outlier: false,
            },
            NoiseSampler::Scheduled { schedule, factor } => NoiseDraw {
                value: gaussian(factor, schedule.multiplier(k, dt).sqrt(), rng),
                outlier: false,
            },
            NoiseSampler::Mixture { epsilon, nominal, outlier } => {
                let u: f64 = rng.random();
                if u < *epsilon {
                    nominal.draw(k, dt, rng)
                } else {
                    let mut d = outlier.draw(k, dt, rng);
                    d.outlier = true;
                    d
                }
            }
        }
    }
}

fn gaussian<R: Rng + ?Sized>(factor: &DMatrix<f64>, scale: f64, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z * scale
}

/// Draws one vector from `spec` at step `k`.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, k: usize, dt: f64, rng: &mut R) -> Result<DVector<f64>> {
    Ok(NoiseSampler::new(spec)?.draw(k, dt, rng).value)
}

/// The six scalar noise scenarios used to illustrate the problem class,
/// returned as `(process, measurement)` specs. Cases are numbered 1..=6.
pub fn fig2_case(case: usize) -> Result<(NoiseSpec, NoiseSpec)> {
    let unit = || NoiseSpec::scalar(1.0);
    let gross = || NoiseSpec::scalar(400.0);
    let varying = || NoiseSpec::time_varying(Schedule::SinAbs, DMatrix::from_element(1, 1, 1.0));
    let contaminated = |nominal: NoiseSpec| NoiseSpec::mixture(0.99, nominal, gross());
    Ok(match case {
        1 => (unit(), contaminated(unit())),
        2 => (unit(), varying()),
        3 => (unit(), contaminated(varying())),
        4 => (contaminated(unit()), unit()),
        5 => (contaminated(varying()), unit()),
        6 => (contaminated(unit()), varying()),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unknown noise case {case}; valid cases are 1-6"
            )))
        }
    })
}
