use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::adaptive::{ar1_step, ar2_step, Ar2Config, ChannelHyper};
use super::kf::kf_step;
use super::robust::stkf_step;
use super::variational::{vbkf_fixed_step, vbkf_step};
use super::{FilterState, FixedPointTol, StepDiagnostics};
use crate::error::{Error, Result};
use crate::losses::{ChannelLosses, LossKind, RobustLoss, GAUSSIAN_NU};
use crate::statespace::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Kf,
    Stkf,
    VbkfFixed,
    Vbkf,
    StkfAr1,
    StkfAr2,
}

impl EstimatorKind {
    /// Whether channels cover the measurement only (VB filters) rather than
    /// all `n + m` whitened channels.
    pub fn measurement_only(self) -> bool {
        matches!(self, EstimatorKind::VbkfFixed | EstimatorKind::Vbkf)
    }
}

fn one() -> f64 {
    1.0
}

/// Parameters of one whitened channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Overrides the filter-wide loss kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<LossKind>,
    pub nu: f64,
    #[serde(default = "one")]
    pub tau2: f64,
    #[serde(default = "one")]
    pub rho: f64,
}

impl ChannelConfig {
    pub fn new(nu: f64, tau2: f64, rho: f64) -> Self {
        Self { kind: None, nu, tau2, rho }
    }
}

fn default_eps() -> f64 {
    FixedPointTol::default().eps
}

fn default_m_iter() -> usize {
    FixedPointTol::default().max_iter
}

fn default_n_iter() -> usize {
    4
}

/// Serializable estimator description.
///
/// `channels` lists the `n + m` whitened channels (process first) for the
/// robust filters and the `m` measurement channels for the VB filters. It
/// is ignored by the KF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub name: String,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub channels: Vec<ChannelConfig>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_m_iter")]
    pub m_iter: usize,
    /// Iterations of the variational filters.
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar2: Option<Ar2Config>,
}

impl FilterConfig {
    pub fn kf(name: &str) -> Self {
        Self {
            name: name.to_string(),
            estimator: EstimatorKind::Kf,
            loss: LossKind::StudentLog,
            channels: Vec::new(),
            eps: default_eps(),
            m_iter: default_m_iter(),
            n_iter: default_n_iter(),
            ar2: None,
        }
    }

    /// Configuration with identical parameters on every process channel and
    /// on every measurement channel.
    #[allow(clippy::too_many_arguments)]
    pub fn split(
        name: &str,
        estimator: EstimatorKind,
        loss: LossKind,
        n: usize,
        m: usize,
        process: ChannelConfig,
        measurement: ChannelConfig,
    ) -> Self {
        let mut channels = Vec::new();
        if !estimator.measurement_only() {
            channels.extend(std::iter::repeat_n(process, n));
        }
        channels.extend(std::iter::repeat_n(measurement, m));
        let ar2 = (estimator == EstimatorKind::StkfAr2).then(Ar2Config::default);
        Self { channels, ar2, loss, ..Self::kf(name) }.with_estimator(estimator)
    }

    fn with_estimator(mut self, estimator: EstimatorKind) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn tol(&self) -> Result<FixedPointTol> {
        FixedPointTol::new(self.eps, self.m_iter)
    }

    fn kind_of(&self, c: &ChannelConfig) -> LossKind {
        c.kind.unwrap_or(self.loss)
    }

    /// Checks the configuration against a model's dimensions.
    pub fn validate(&self, model: &LinearModel) -> Result<()> {
        self.tol()?;
        let expected = match self.estimator {
            EstimatorKind::Kf => return Ok(()),
            k if k.measurement_only() => model.m(),
            _ => model.channels(),
        };
        if self.channels.len() != expected {
            return Err(Error::Config(format!(
                "filter '{}' needs {} channel entries, found {}",
                self.name,
                expected,
                self.channels.len()
            )));
        }
        if self.n_iter == 0 {
            return Err(Error::Config(format!("filter '{}': n_iter must be >= 1", self.name)));
        }
        for (i, c) in self.channels.iter().enumerate() {
            RobustLoss::new(self.kind_of(c), c.nu, c.tau2)
                .map_err(|e| Error::Config(format!("filter '{}' channel {i}: {e}", self.name)))?;
            if !(c.rho > 0.0 && c.rho <= 1.0) {
                return Err(Error::Config(format!("filter '{}' channel {i}: rho must lie in (0, 1]", self.name)));
            }
        }
        if let Some(ar2) = &self.ar2 {
            ar2.validate()?;
        }
        Ok(())
    }
}

/// A running filter instance built from a [`FilterConfig`].
#[derive(Debug, Clone)]
pub struct Estimator {
    config: FilterConfig,
    tol: FixedPointTol,
    state: FilterState,
    losses: Option<ChannelLosses>,
    hyper: Option<ChannelHyper>,
    kinds: Vec<LossKind>,
    ar2: Ar2Config,
}

impl Estimator {
    pub fn new(config: FilterConfig, model: &LinearModel, x0: DVector<f64>, p0: DMatrix<f64>) -> Result<Self> {
        config.validate(model)?;
        let state = FilterState::new(x0, p0)?;
        if state.x.len() != model.n() {
            return Err(Error::Dimension(format!("initial state must have length {}", model.n())));
        }
        let kinds: Vec<LossKind> = config.channels.iter().map(|c| config.kind_of(c)).collect();
        let losses = match config.estimator {
            EstimatorKind::Stkf => Some(ChannelLosses::new(
                config
                    .channels
                    .iter()
                    .zip(&kinds)
                    .map(|(c, &k)| RobustLoss::new(k, c.nu, c.tau2))
                    .collect::<Result<_>>()?,
                model.n(),
                model.m(),
            )?),
            _ => None,
        };
        let hyper = match config.estimator {
            EstimatorKind::Vbkf | EstimatorKind::StkfAr1 | EstimatorKind::StkfAr2 => Some(ChannelHyper::new(
                config.channels.iter().map(|c| c.nu).collect(),
                config.channels.iter().map(|c| c.tau2).collect(),
                config.channels.iter().map(|c| c.rho).collect(),
            )?),
            _ => None,
        };
        Ok(Self {
            tol: config.tol()?,
            ar2: config.ar2.clone().unwrap_or_default(),
            config,
            state,
            losses,
            hyper,
            kinds,
        })
    }

    /// Initial state `x̂₀ = 0`, `P₀ = I`.
    pub fn with_default_prior(config: FilterConfig, model: &LinearModel) -> Result<Self> {
        let n = model.n();
        Self::new(config, model, DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn hyper(&self) -> Option<&ChannelHyper> {
        self.hyper.as_ref()
    }

    /// Advances the filter by one measurement. On error the state is left
    /// untouched.
    pub fn step(&mut self, model: &LinearModel, u: Option<&DVector<f64>>, y: &DVector<f64>) -> Result<StepDiagnostics> {
        let (state, diag) = match self.config.estimator {
            EstimatorKind::Kf => kf_step(model, &self.state, u, y)?,
            EstimatorKind::Stkf => stkf_step(model, &self.state, u, y, self.losses.as_ref().unwrap(), self.tol)?,
            EstimatorKind::VbkfFixed => {
                let nu: Vec<f64> = self.config.channels.iter().map(|c| c.nu).collect();
                let tau2: Vec<f64> = self.config.channels.iter().map(|c| c.tau2).collect();
                vbkf_fixed_step(model, &self.state, u, y, &nu, &tau2, self.config.n_iter)?
            }
            EstimatorKind::Vbkf => {
                let (s, d, h) = vbkf_step(model, &self.state, self.hyper.as_ref().unwrap(), u, y, self.config.n_iter)?;
                self.hyper = Some(h);
                (s, d)
            }
            EstimatorKind::StkfAr1 => {
                let (s, d, h) = ar1_step(model, &self.state, self.hyper.as_ref().unwrap(), u, y, &self.kinds, self.tol)?;
                self.hyper = Some(h);
                (s, d)
            }
            EstimatorKind::StkfAr2 => {
                let (s, d, h) =
                    ar2_step(model, &self.state, self.hyper.as_ref().unwrap(), &self.ar2, u, y, &self.kinds, self.tol)?;
                self.hyper = Some(h);
                (s, d)
            }
        };
        self.state = state;
        Ok(diag)
    }

    /// Per-channel variance estimate in whitened units (length `n + m`):
    /// the adapted scale for adaptive channels, otherwise the inflation
    /// `1/d(e)` of the last step.
    pub fn variance_estimate(&self, diag: &StepDiagnostics) -> Vec<f64> {
        let mut out = diag.lambdas.clone();
        if let Some(h) = &self.hyper {
            let offset = out.len() - h.len();
            for i in 0..h.len() {
                if h.rho[i] < 1.0 {
                    out[offset + i] = h.tau2[i];
                }
            }
        }
        out
    }

    /// True when every channel is at the Gaussian sentinel.
    pub fn is_gaussian(&self) -> bool {
        self.config.estimator == EstimatorKind::Kf || self.config.channels.iter().all(|c| c.nu >= GAUSSIAN_NU && c.rho >= 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> LinearModel {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        LinearModel::new(a, None, c, DMatrix::identity(2, 2) * 0.01, DMatrix::from_element(1, 1, 0.2), 0.1).unwrap()
    }

    #[test]
    fn json_defaults() {
        let cfg: FilterConfig = serde_json::from_str(
            r#"{"name":"robust","estimator":"stkf","channels":[{"nu":1e8},{"nu":1e8},{"nu":4}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.eps, 0.01);
        assert_eq!(cfg.m_iter, 4);
        assert_eq!(cfg.channels[2].tau2, 1.0);
        cfg.validate(&model()).unwrap();
        let back: FilterConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn channel_count_checked() {
        let mut cfg = FilterConfig::split(
            "x",
            EstimatorKind::Stkf,
            LossKind::StudentLog,
            2,
            1,
            ChannelConfig::new(1e8, 1.0, 1.0),
            ChannelConfig::new(4.0, 1.0, 1.0),
        );
        cfg.validate(&model()).unwrap();
        cfg.channels.pop();
        assert!(matches!(cfg.validate(&model()), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_estimator_rejected() {
        let r: std::result::Result<FilterConfig, _> = serde_json::from_str(r#"{"name":"a","estimator":"ukf"}"#);
        assert!(r.is_err());
    }

    #[test]
    fn vb_split_uses_measurement_channels_only() {
        let cfg = FilterConfig::split(
            "vb",
            EstimatorKind::Vbkf,
            LossKind::StudentLog,
            2,
            1,
            ChannelConfig::new(1e8, 1.0, 1.0),
            ChannelConfig::new(50.0, 1.0, 0.98),
        );
        assert_eq!(cfg.channels.len(), 1);
        let mut est = Estimator::with_default_prior(cfg, &model()).unwrap();
        let d = est.step(&model(), None, &DVector::from_element(1, 0.5)).unwrap();
        assert_eq!(est.variance_estimate(&d).len(), 3);
    }
}
