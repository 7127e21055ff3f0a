use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{LinearModel, NoiseSpec, Schedule};

/// Forgetting factors compared in the step-variance study.
pub const EXAMPLE2_RHOS: [f64; 4] = [0.995, 0.99, 0.98, 0.97];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    /// Target tracking with outliers (case 1) or sinusoidal variance (case 2).
    Example1,
    /// Target tracking with a step in the measurement variance.
    Example2,
    /// Torsion load system with an augmented disturbance state.
    Example3,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 3] = [ExperimentId::Example1, ExperimentId::Example2, ExperimentId::Example3];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Example1 => "example1",
            ExperimentId::Example2 => "example2",
            ExperimentId::Example3 => "example3",
        }
    }

    pub fn cases(self) -> &'static [usize] {
        match self {
            ExperimentId::Example1 => &[1, 2],
            ExperimentId::Example2 => &[1],
            ExperimentId::Example3 => &[1, 2, 3],
        }
    }

    pub fn default_steps(self) -> usize {
        match self {
            ExperimentId::Example1 | ExperimentId::Example2 => 6000,
            ExperimentId::Example3 => 2000,
        }
    }

    pub fn check_case(self, case: usize) -> Result<()> {
        if self.cases().contains(&case) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} has no case {case}; valid cases: {}",
                self.name(),
                self.cases().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'; valid: example1, example2, example3")))
    }
}

/// A model with its process and measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub experiment: ExperimentId,
    pub case: usize,
    pub model: LinearModel,
    pub w_spec: NoiseSpec,
    pub v_spec: NoiseSpec,
}

impl Scenario {
    pub fn build(experiment: ExperimentId, case: usize) -> Result<Self> {
        experiment.check_case(case)?;
        let (model, w_spec, v_spec) = match experiment {
            ExperimentId::Example1 => build_example1(case)?,
            ExperimentId::Example2 => build_example2()?,
            ExperimentId::Example3 => build_example3(case)?,
        };
        Ok(Self { experiment, case, model, w_spec, v_spec })
    }
}

const TRACKING_DT: f64 = 0.01;
const TRACKING_R: f64 = 0.1;

fn tracking_model() -> Result<LinearModel> {
    let t = TRACKING_DT;
    let a = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
    let b = DMatrix::from_column_slice(2, 1, &[0.5 * t * t, t]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let q = &b * b.transpose();
    LinearModel::new(a, Some(b), c, q, DMatrix::from_element(1, 1, TRACKING_R), t)
}

fn scalar_process() -> NoiseSpec {
    NoiseSpec::scalar(1.0).through_input()
}

/// Constant-velocity tracking model with scalar acceleration noise entering
/// through `B`. Case 1 mixes 5% outliers of variance 10 into `N(0, 0.1)`
/// measurement noise; case 2 scales the measurement variance by
/// `2 sin²(0.04π t) + 1`.
pub fn build_example1(case: usize) -> Result<(LinearModel, NoiseSpec, NoiseSpec)> {
    let model = tracking_model()?;
    let v = match case {
        1 => NoiseSpec::mixture(0.95, NoiseSpec::scalar(TRACKING_R), NoiseSpec::scalar(10.0)),
        2 => NoiseSpec::time_varying(Schedule::SinSq, DMatrix::from_element(1, 1, TRACKING_R)),
        _ => return Err(Error::Config(format!("example1 has no case {case}; valid cases: 1, 2"))),
    };
    Ok((model, scalar_process(), v))
}

/// Tracking model whose measurement variance is 0.1 for `k ≤ 2000`, 2.5 for
/// `2000 < k ≤ 4000` and 0.1 afterwards.
pub fn build_example2() -> Result<(LinearModel, NoiseSpec, NoiseSpec)> {
    let model = tracking_model()?;
    let schedule = Schedule::Step { levels: vec![1.0, 25.0, 1.0], switches: vec![2000, 4000] };
    let v = NoiseSpec::time_varying(schedule, DMatrix::from_element(1, 1, TRACKING_R));
    Ok((model, scalar_process(), v))
}

pub(crate) fn torsion_matrices() -> (DMatrix<f64>, DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let f = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.9205, 0.0795, 0.0085, 0.0003, //
            0.2045, 0.7955, 0.0007, 0.0085, //
            -14.3468, 14.3468, 0.6872, 0.0746, //
            37.5370, -37.5370, 0.1863, 0.6405,
        ],
    );
    let g1 = DVector::from_vec(vec![0.0826, 0.0031, 15.5568, 1.2100]);
    let g2 = DVector::from_vec(vec![0.0031, 0.2076, 1.2100, 38.7470]);
    let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    (f, g1, g2, h)
}

/// Torsion load system augmented with a random-walk disturbance as the
/// first state.
///
/// Case 1 steps the process covariance (`100Q` outside `800 ≤ k < 1200`);
/// case 2 contaminates the process with 1% outliers of covariance `900Q` and
/// lets `R` vary sinusoidally; case 3 keeps `Q` and adds 1% outliers of
/// covariance `900R` to the sinusoidal measurement noise.
pub fn build_example3(case: usize) -> Result<(LinearModel, NoiseSpec, NoiseSpec)> {
    let (f, g1, g2, h) = torsion_matrices();
    let mut a = DMatrix::zeros(5, 5);
    a[(0, 0)] = 1.0;
    a.view_mut((1, 0), (4, 1)).copy_from(&g2);
    a.view_mut((1, 1), (4, 4)).copy_from(&f);
    let mut b = DMatrix::zeros(5, 1);
    b.view_mut((1, 0), (4, 1)).copy_from(&g1);
    let mut c = DMatrix::zeros(2, 5);
    c.view_mut((0, 1), (2, 4)).copy_from(&h);
    let q = DMatrix::identity(5, 5) * 0.01;
    let r = DMatrix::identity(2, 2) * 0.5;
    let model = LinearModel::new(a, Some(b), c, q.clone(), r.clone(), 0.01)?;
    let (w, v) = match case {
        1 => (
            NoiseSpec::time_varying(Schedule::Step { levels: vec![100.0, 1.0, 100.0], switches: vec![799, 1199] }, q),
            NoiseSpec::gaussian(r),
        ),
        2 => (
            NoiseSpec::mixture(0.99, NoiseSpec::gaussian(q.clone()), NoiseSpec::gaussian(q * 900.0)),
            NoiseSpec::time_varying(Schedule::SinSq, r),
        ),
        3 => (
            NoiseSpec::gaussian(q),
            NoiseSpec::mixture(0.99, NoiseSpec::time_varying(Schedule::SinSq, r.clone()), NoiseSpec::gaussian(r * 900.0)),
        ),
        _ => return Err(Error::Config(format!("example3 has no case {case}; valid cases: 1, 2, 3"))),
    };
    Ok((model, w, v))
}
