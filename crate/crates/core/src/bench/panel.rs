use serde::Serialize;

use super::examples::{ExperimentId, EXAMPLE2_RHOS};
use crate::error::{Error, Result};
use crate::filters::{Ar2Config, ChannelConfig, EstimatorKind, FilterConfig};
use crate::losses::{LossKind, GAUSSIAN_NU};

/// Published single-run result for one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaperRow {
    pub experiment: ExperimentId,
    pub case: usize,
    pub estimator: &'static str,
    pub rmse: &'static [f64],
    pub mean_iterations: Option<f64>,
}

const fn row(
    experiment: ExperimentId,
    case: usize,
    estimator: &'static str,
    rmse: &'static [f64],
    mean_iterations: Option<f64>,
) -> PaperRow {
    PaperRow { experiment, case, estimator, rmse, mean_iterations }
}

use ExperimentId::{Example1 as E1, Example3 as E3};

/// Every estimator row of the published result tables.
pub const PAPER_ROWS: &[PaperRow] = &[
    row(E1, 1, "VBKF-fixed", &[0.053, 0.081], Some(4.0)),
    row(E1, 1, "STKF", &[0.053, 0.081], Some(1.096)),
    row(E1, 1, "KF", &[0.111, 0.129], Some(1.0)),
    row(E1, 2, "VBKF", &[0.092, 0.086], Some(4.0)),
    row(E1, 2, "STKF-AR1", &[0.092, 0.086], Some(2.190)),
    row(E1, 2, "KF", &[0.130, 0.143], Some(1.0)),
    row(E3, 1, "VBKF", &[0.710, 2.609, 2.717, 71.101, 111.818], None),
    row(E3, 1, "STKF-AR1", &[0.507, 0.237, 0.249, 58.162, 64.819], None),
    row(E3, 1, "KF", &[0.604, 0.589, 0.477, 55.350, 71.400], None),
    row(E3, 1, "RBKF1", &[0.557, 0.258, 0.265, 55.888, 62.650], None),
    row(E3, 1, "RBKF2", &[0.535, 0.254, 0.259, 55.664, 60.958], None),
    row(E3, 1, "RBKF3", &[0.555, 0.273, 0.271, 55.093, 60.377], None),
    row(E3, 2, "VBKF", &[0.408, 0.625, 0.863, 32.089, 58.726], None),
    row(E3, 2, "STKF-AR1", &[0.375, 0.423, 0.503, 28.231, 47.228], None),
    row(E3, 2, "KF", &[0.468, 0.416, 0.515, 28.315, 49.509], None),
    row(E3, 2, "RBKF1", &[0.392, 2.151, 2.263, 35.268, 62.601], None),
    row(E3, 2, "RBKF2", &[0.380, 0.743, 0.978, 32.881, 59.835], None),
    row(E3, 2, "RBKF3", &[0.386, 0.502, 0.754, 30.510, 56.959], None),
    row(E3, 3, "VBKF", &[0.200, 0.359, 0.406, 15.085, 23.448], None),
    row(E3, 3, "STKF-AR2", &[0.203, 0.322, 0.389, 15.165, 22.948], None),
    row(E3, 3, "KF", &[0.359, 0.600, 0.524, 21.320, 34.781], None),
    row(E3, 3, "RBKF1", &[0.229, 0.428, 0.508, 16.257, 24.640], None),
    row(E3, 3, "RBKF2", &[0.210, 0.363, 0.425, 15.576, 23.530], None),
    row(E3, 3, "RBKF3", &[0.215, 0.341, 0.411, 15.554, 23.630], None),
];

/// Published values for one estimator, if any.
pub fn paper_row(experiment: ExperimentId, case: usize, estimator: &str) -> Option<&'static PaperRow> {
    PAPER_ROWS
        .iter()
        .find(|r| r.experiment == experiment && r.case == case && r.estimator == estimator)
}

const G: f64 = GAUSSIAN_NU;

fn ch(nu: f64, rho: f64) -> ChannelConfig {
    ChannelConfig::new(nu, 1.0, rho)
}

fn split(name: &str, est: EstimatorKind, loss: LossKind, dims: (usize, usize), p: ChannelConfig, r: ChannelConfig) -> FilterConfig {
    FilterConfig::split(name, est, loss, dims.0, dims.1, p, r)
}

/// Variational filter with forgetting, started at its steady-state evidence.
pub fn vbkf(name: &str, rho: f64, dims: (usize, usize)) -> FilterConfig {
    split(name, EstimatorKind::Vbkf, LossKind::StudentLog, dims, ch(G, 1.0), ch(1.0 / (1.0 - rho), rho))
}

/// Adaptive robust filter with Gaussian process channels and one adaptive
/// measurement configuration.
pub fn ar1_measurement(name: &str, nu: f64, rho: f64, dims: (usize, usize)) -> FilterConfig {
    split(name, EstimatorKind::StkfAr1, LossKind::StudentLog, dims, ch(G, 1.0), ch(nu, rho))
}

/// Robust filter of the given loss with uniform process and measurement `ν`.
pub fn robust(name: &str, loss: LossKind, nu_p: f64, nu_r: f64, dims: (usize, usize)) -> FilterConfig {
    split(name, EstimatorKind::Stkf, loss, dims, ch(nu_p, 1.0), ch(nu_r, 1.0))
}

/// Estimators compared in one experiment and case.
pub fn default_panel(experiment: ExperimentId, case: usize) -> Result<Vec<FilterConfig>> {
    experiment.check_case(case)?;
    let tracking = (2, 1);
    let torsion = (5, 2);
    let kf = FilterConfig::kf("KF");
    Ok(match (experiment, case) {
        (ExperimentId::Example1, 1) => {
            let mut vb = split("VBKF-fixed", EstimatorKind::VbkfFixed, LossKind::StudentLog, tracking, ch(G, 1.0), ch(4.0, 1.0));
            vb.n_iter = 4;
            vec![vb, robust("STKF", LossKind::StudentLog, G, 4.0, tracking), kf]
        }
        (ExperimentId::Example1, _) => vec![
            vbkf("VBKF", 0.99, tracking),
            ar1_measurement("STKF-AR1", 100.0, 0.99, tracking),
            kf,
        ],
        (ExperimentId::Example2, _) => {
            let mut panel: Vec<FilterConfig> = EXAMPLE2_RHOS
                .iter()
                .map(|&rho| ar1_measurement(&format!("STKF-AR1 rho={rho}"), 1.0 / (1.0 - rho), rho, tracking))
                .collect();
            panel.push(kf);
            panel
        }
        (ExperimentId::Example3, 1) => vec![
            vbkf("VBKF", 0.98, torsion),
            split("STKF-AR1", EstimatorKind::StkfAr1, LossKind::StudentLog, torsion, ch(100.0, 0.98), ch(G, 1.0)),
            kf,
            robust("RBKF1", LossKind::ExponentialWelsch, 2.0, G, torsion),
            robust("RBKF2", LossKind::PowerFamily, 0.5, 1.999, torsion),
            robust("RBKF3", LossKind::SquareRoot, 1.0, G, torsion),
        ],
        (ExperimentId::Example3, 2) => vec![
            vbkf("VBKF", 0.98, torsion),
            split("STKF-AR1", EstimatorKind::StkfAr1, LossKind::StudentLog, torsion, ch(3.0, 1.0), ch(100.0, 0.98)),
            kf,
            robust("RBKF1", LossKind::ExponentialWelsch, 2.0, 2.0, torsion),
            robust("RBKF2", LossKind::PowerFamily, 0.5, 0.5, torsion),
            robust("RBKF3", LossKind::SquareRoot, 1.0, 1.0, torsion),
        ],
        (ExperimentId::Example3, _) => {
            let mut ar2 = split("STKF-AR2", EstimatorKind::StkfAr2, LossKind::StudentLog, torsion, ch(G, 1.0), ch(100.0, 0.98));
            ar2.ar2 = Some(Ar2Config::default());
            vec![
                vbkf("VBKF", 0.98, torsion),
                ar2,
                kf,
                robust("RBKF1", LossKind::ExponentialWelsch, G, 2.0, torsion),
                robust("RBKF2", LossKind::PowerFamily, 1.999, 0.5, torsion),
                robust("RBKF3", LossKind::SquareRoot, G, 1.0, torsion),
            ]
        }
    })
}

/// Restricts a panel to the named estimators, keeping panel order.
pub fn select_panel(panel: Vec<FilterConfig>, names: &[String]) -> Result<Vec<FilterConfig>> {
    if names.is_empty() {
        return Ok(panel);
    }
    for name in names {
        if !panel.iter().any(|f| &f.name == name) {
            return Err(Error::Config(format!(
                "unknown estimator '{name}'; panel has: {}",
                panel.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    Ok(panel.into_iter().filter(|f| names.contains(&f.name)).collect())
}
