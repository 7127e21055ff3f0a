use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::model::LinearModel;
use super::noise::{NoiseSampler, NoiseSpec};
use super::rng::{substream, MEASUREMENT_STREAM, PROCESS_STREAM};
use crate::error::{Error, Result};

/// Simulated ground truth and measurements.
///
/// `states[j]` is `x_j` for `j = 0..=N`; `measurements[j - 1]` is `y_j` for
/// `j = 1..=N`. Noise draws and per-step nominal covariances are indexed the
/// same way as measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub inputs: Option<Vec<DVector<f64>>>,
    pub process_draws: Vec<DVector<f64>>,
    pub measurement_draws: Vec<DVector<f64>>,
    pub process_outlier: Vec<bool>,
    pub measurement_outlier: Vec<bool>,
    /// Nominal-component process covariance per step, in state coordinates.
    pub true_w_cov: Vec<DMatrix<f64>>,
    /// Nominal-component measurement covariance per step.
    pub true_v_cov: Vec<DMatrix<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Input applied between `x_{j-1}` and `x_j`, if any.
    pub fn input(&self, j: usize) -> Option<&DVector<f64>> {
        self.inputs.as_ref().map(|u| &u[j - 1])
    }

    /// Writes `k, x_1..x_n, y_1..y_m` rows for `k = 1..=N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states[0].len();
        let m = self.measurements.first().map_or(0, |y| y.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("y_{i}")));
        w.write_record(&header)?;
        for (j, y) in self.measurements.iter().enumerate() {
            let mut rec = vec![(j + 1).to_string()];
            rec.extend(self.states[j + 1].iter().map(|v| v.to_string()));
            rec.extend(y.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `N` steps of `model` driven by `w_spec`/`v_spec`.
///
/// Step `j = 1..=N` computes `x_j = A x_{j-1} + B_u u_{j-1} + G w_j` and
/// `y_j = C x_j + v_j`, where `G` is `B_u` when the process spec maps through
/// the input and the identity otherwise. Schedules are evaluated at `j` and
/// `model.dt`. Process and measurement draws use separate substreams of `seed`.
pub fn simulate(
    model: &LinearModel,
    w_spec: &NoiseSpec,
    v_spec: &NoiseSpec,
    inputs: Option<&[DVector<f64>]>,
    x0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    model.validate()?;
    let (n, m) = (model.n(), model.m());
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    let noise_map = if w_spec.maps_through_input() {
        let b = model
            .b_u
            .as_ref()
            .ok_or_else(|| Error::Dimension("process noise maps through input but model has no B_u".into()))?;
        if w_spec.dim() != b.ncols() {
            return Err(Error::Dimension(format!(
                "process noise has dimension {}, input map expects {}",
                w_spec.dim(),
                b.ncols()
            )));
        }
        Some(b.clone())
    } else {
        if w_spec.dim() != n {
            return Err(Error::Dimension(format!(
                "process noise has dimension {}, expected {n}",
                w_spec.dim()
            )));
        }
        None
    };
    if v_spec.dim() != m {
        return Err(Error::Dimension(format!(
            "measurement noise has dimension {}, expected {m}",
            v_spec.dim()
        )));
    }
    if let Some(u) = inputs {
        let b = model
            .b_u
            .as_ref()
            .ok_or_else(|| Error::Dimension("inputs given but model has no B_u".into()))?;
        if u.len() != steps || u.iter().any(|ui| ui.len() != b.ncols()) {
            return Err(Error::Dimension(format!("expected {steps} inputs of length {}", b.ncols())));
        }
    }

    let w_sampler = NoiseSampler::new(w_spec)?;
    let v_sampler = NoiseSampler::new(v_spec)?;
    let mut w_rng = substream(seed, PROCESS_STREAM);
    let mut v_rng = substream(seed, MEASUREMENT_STREAM);
    let dt = model.dt;

    let mut traj = Trajectory {
        states: Vec::with_capacity(steps + 1),
        measurements: Vec::with_capacity(steps),
        inputs: inputs.map(<[_]>::to_vec),
        process_draws: Vec::with_capacity(steps),
        measurement_draws: Vec::with_capacity(steps),
        process_outlier: Vec::with_capacity(steps),
        measurement_outlier: Vec::with_capacity(steps),
        true_w_cov: Vec::with_capacity(steps),
        true_v_cov: Vec::with_capacity(steps),
        seed,
    };
    traj.states.push(x0.clone());

    for j in 1..=steps {
        let w = w_sampler.draw(j, dt, &mut w_rng);
        let v = v_sampler.draw(j, dt, &mut v_rng);
        let prev = &traj.states[j - 1];
        let mut x = &model.a * prev;
        if let (Some(u), Some(b)) = (inputs, model.b_u.as_ref()) {
            x += b * &u[j - 1];
        }
        let w_cov = w_spec.nominal_cov(j, dt);
        match &noise_map {
            Some(g) => {
                x += g * &w.value;
                traj.true_w_cov.push(g * w_cov * g.transpose());
            }
            None => {
                x += &w.value;
                traj.true_w_cov.push(w_cov);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("simulated state became non-finite at step {j}")));
        }
        let y = &model.c * &x + &v.value;
        traj.true_v_cov.push(v_spec.nominal_cov(j, dt));
        traj.states.push(x);
        traj.measurements.push(y);
        traj.process_draws.push(w.value);
        traj.measurement_draws.push(v.value);
        traj.process_outlier.push(w.outlier);
        traj.measurement_outlier.push(v.outlier);
    }
    Ok(traj)
}
