use serde::{Deserialize, Serialize};

use super::examples::ExperimentId;
use super::panel::{ar1_measurement, robust};
use super::run::{run_panel, ExperimentConfig};
use crate::error::{Error, Result};
use crate::filters::{Ar2Config, FilterConfig};
use crate::losses::{LossKind, GAUSSIAN_NU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Forgetting factor of the adaptive measurement channel.
    Rho,
    /// Measurement-channel degrees of freedom of the robust filter.
    Nu,
    /// Switching threshold multiplier.
    Eta,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho" => Ok(SweepParam::Rho),
            "nu" => Ok(SweepParam::Nu),
            "eta" => Ok(SweepParam::Eta),
            other => Err(Error::Config(format!("unknown sweep parameter '{other}'; valid: rho, nu, eta"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Rho => "rho",
            SweepParam::Nu => "nu",
            SweepParam::Eta => "eta",
        }
    }

    /// Experiment and case swept by default.
    pub fn default_target(self) -> (ExperimentId, usize) {
        match self {
            SweepParam::Rho => (ExperimentId::Example2, 1),
            SweepParam::Nu => (ExperimentId::Example1, 1),
            SweepParam::Eta => (ExperimentId::Example3, 3),
        }
    }

    /// Filter swept at `value` for a model with `n` states and `m` outputs.
    pub fn filter(self, value: f64, n: usize, m: usize) -> FilterConfig {
        let name = format!("{}={value}", self.name());
        match self {
            SweepParam::Rho => ar1_measurement(&name, 1.0 / (1.0 - value), value, (n, m)),
            SweepParam::Nu => robust(&name, LossKind::StudentLog, GAUSSIAN_NU, value, (n, m)),
            SweepParam::Eta => {
                let mut f = ar1_measurement(&name, 100.0, 0.98, (n, m));
                f.estimator = crate::filters::EstimatorKind::StkfAr2;
                f.ar2 = Some(Ar2Config { eta: value, enabled: Vec::new() });
                f
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub rmse: Vec<f64>,
    /// Mean of the per-state RMSEs.
    pub armse: f64,
    pub mean_iterations: f64,
    pub divergences: usize,
}

/// One panel run per value; all values share the seeds and trajectories.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    experiment: ExperimentId,
    case: usize,
    seeds: Vec<u64>,
    steps: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut cfg = ExperimentConfig::registered(experiment, case, seeds)?;
    if let Some(s) = steps {
        cfg.steps = s;
    }
    let model = cfg.scenario()?.model;
    cfg.panel = values.iter().map(|&v| param.filter(v, model.n(), model.m())).collect();
    let result = run_panel(&cfg)?;
    Ok(values
        .iter()
        .zip(&result.estimators)
        .map(|(&value, e)| SweepRow {
            param: param.name().to_string(),
            value,
            rmse: e.rmse.clone(),
            armse: e.armse(),
            mean_iterations: e.mean_iterations,
            divergences: e.divergences,
        })
        .collect())
}
