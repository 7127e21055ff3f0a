use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::examples::{ExperimentId, Scenario};
use super::panel::default_panel;
use crate::error::{Error, Result};
use crate::filters::{Estimator, FilterConfig};
use crate::statespace::{simulate, Trajectory};

/// A Monte Carlo experiment: scenario, estimator panel and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub case: usize,
    pub panel: Vec<FilterConfig>,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub dt: f64,
    /// Keep per-step channel variance estimates (averaged over seeds).
    #[serde(default)]
    pub record_traces: bool,
}

impl ExperimentConfig {
    /// Registered panel with the experiment's default length and step.
    pub fn registered(experiment: ExperimentId, case: usize, seeds: Vec<u64>) -> Result<Self> {
        let scenario = Scenario::build(experiment, case)?;
        Ok(Self {
            experiment,
            case,
            panel: default_panel(experiment, case)?,
            steps: experiment.default_steps(),
            seeds,
            dt: scenario.model.dt,
            record_traces: false,
        })
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::build(self.experiment, self.case)?;
        s.model.dt = self.dt;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let scenario = self.scenario()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.panel.is_empty() {
            return Err(Error::Config("estimator panel is empty".into()));
        }
        for (i, f) in self.panel.iter().enumerate() {
            if self.panel[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Config(format!("duplicate estimator name '{}'", f.name)));
            }
            f.validate(&scenario.model)?;
        }
        Ok(())
    }
}

/// Per-state RMSE `√(Σ_k (x̂_k − x_k)²/N)` of estimates for `k = 1..=N`.
pub fn rmse(truth: &Trajectory, estimates: &[DVector<f64>]) -> Result<Vec<f64>> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Dimension(format!("expected {} estimates, got {}", truth.len(), estimates.len())));
    }
    let n = truth.states[0].len();
    let mut acc = vec![0.0; n];
    for (k, est) in estimates.iter().enumerate() {
        if est.len() != n {
            return Err(Error::Dimension(format!("estimate {k} has length {}, expected {n}", est.len())));
        }
        for (i, a) in acc.iter_mut().enumerate() {
            let d = est[i] - truth.states[k + 1][i];
            *a += d * d;
        }
    }
    Ok(acc.into_iter().map(|s| (s / estimates.len() as f64).sqrt()).collect())
}

/// One estimator over one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub estimates: Vec<DVector<f64>>,
    pub iterations: Vec<usize>,
    /// Channel variance estimates per step (see [`Estimator::variance_estimate`]).
    pub lambdas: Vec<Vec<f64>>,
    pub reverted: Vec<Vec<bool>>,
}

impl SeedRun {
    pub fn mean_iterations(&self) -> f64 {
        self.iterations.iter().sum::<usize>() as f64 / self.iterations.len().max(1) as f64
    }
}

/// Runs one estimator over a trajectory from `x̂₀ = 0`, `P₀ = I`.
pub fn run_filter(scenario: &Scenario, config: &FilterConfig, traj: &Trajectory) -> Result<SeedRun> {
    let model = &scenario.model;
    let mut est = Estimator::with_default_prior(config.clone(), model)?;
    let mut run = SeedRun {
        estimates: Vec::with_capacity(traj.len()),
        iterations: Vec::with_capacity(traj.len()),
        lambdas: Vec::with_capacity(traj.len()),
        reverted: Vec::with_capacity(traj.len()),
    };
    for (j, y) in traj.measurements.iter().enumerate() {
        let diag = est.step(model, traj.input(j + 1), y)?;
        run.estimates.push(est.state().x.clone());
        run.iterations.push(diag.iterations);
        run.lambdas.push(est.variance_estimate(&diag));
        run.reverted.push(diag.reverted);
    }
    Ok(run)
}

/// Simulates the scenario for one seed from `x₀ = 0`.
pub fn simulate_scenario(scenario: &Scenario, steps: usize, seed: u64) -> Result<Trajectory> {
    let x0 = DVector::zeros(scenario.model.n());
    simulate(&scenario.model, &scenario.w_spec, &scenario.v_spec, None, &x0, steps, seed)
}

/// Ratio of true to nominal noise variance per whitened channel and step.
/// Process channels use `tr(Q_true)/tr(Q)`; measurement channels use
/// `R_true[i,i]/R[i,i]`.
pub fn true_channel_variance(scenario: &Scenario, traj: &Trajectory) -> Vec<Vec<f64>> {
    let model = &scenario.model;
    let q_trace = model.q.trace();
    (0..traj.len())
        .map(|k| {
            let w_ratio = traj.true_w_cov[k].trace() / q_trace;
            let mut row = vec![w_ratio; model.n()];
            row.extend((0..model.m()).map(|i| traj.true_v_cov[k][(i, i)] / model.r[(i, i)]));
            row
        })
        .collect()
}

fn is_numerical_failure(e: &Error) -> bool {
    matches!(e, Error::Divergence(_) | Error::NotPositiveDefinite(_) | Error::Singular(_))
}

/// Aggregated results of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub name: String,
    /// Seed-averaged per-state RMSE over non-divergent runs.
    pub rmse: Vec<f64>,
    /// Per-seed RMSE, `None` for divergent runs.
    pub rmse_per_seed: Vec<Option<Vec<f64>>>,
    pub mean_iterations: f64,
    pub divergences: usize,
    /// Not exported, so reruns with the same config give identical files.
    #[serde(skip)]
    pub wall_time_s: f64,
    /// Seed-averaged channel variance estimates per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_trace: Option<Vec<Vec<f64>>>,
}

impl EstimatorResult {
    /// Mean of the per-state RMSEs.
    pub fn armse(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub experiment: ExperimentId,
    pub case: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorResult>,
    /// Seed-averaged true channel variance per step, when traces are kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_true: Option<Vec<Vec<f64>>>,
}

impl PanelResult {
    pub fn get(&self, name: &str) -> Option<&EstimatorResult> {
        self.estimators.iter().find(|e| e.name == name)
    }

    pub fn total_divergences(&self) -> usize {
        self.estimators.iter().map(|e| e.divergences).sum()
    }
}

struct SeedOutcome {
    runs: Vec<std::result::Result<SeedRun, String>>,
    rmse: Vec<Option<Vec<f64>>>,
    times: Vec<f64>,
    lambda_true: Option<Vec<Vec<f64>>>,
}

fn add_into(acc: &mut [Vec<f64>], rows: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(rows) {
        for (x, y) in a.iter_mut().zip(r) {
            *x += y;
        }
    }
}

/// Runs every estimator of the panel on the same trajectory per seed, in
/// parallel over seeds, and aggregates. Runs that fail numerically are
/// counted as divergent and left out of the averages.
pub fn run_panel(cfg: &ExperimentConfig) -> Result<PanelResult> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let outcomes: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedOutcome> {
            let traj = simulate_scenario(&scenario, cfg.steps, seed)?;
            let mut out = SeedOutcome { runs: Vec::new(), rmse: Vec::new(), times: Vec::new(), lambda_true: None };
            for f in &cfg.panel {
                let start = Instant::now();
                match run_filter(&scenario, f, &traj) {
                    Ok(run) => {
                        out.rmse.push(Some(rmse(&traj, &run.estimates)?));
                        out.runs.push(Ok(run));
                    }
                    Err(e) if is_numerical_failure(&e) => {
                        log::warn!("{} diverged on seed {seed}: {e}", f.name);
                        out.rmse.push(None);
                        out.runs.push(Err(e.to_string()));
                    }
                    Err(e) => return Err(e),
                }
                out.times.push(start.elapsed().as_secs_f64());
            }
            if cfg.record_traces {
                out.lambda_true = Some(true_channel_variance(&scenario, &traj));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let l = scenario.model.channels();
    let n = scenario.model.n();
    let lambda_true = cfg.record_traces.then(|| {
        let mut acc = vec![vec![0.0; l]; cfg.steps];
        for o in &outcomes {
            add_into(&mut acc, o.lambda_true.as_ref().unwrap());
        }
        let s = outcomes.len() as f64;
        acc.iter_mut().flatten().for_each(|v| *v /= s);
        acc
    });
    let estimators = cfg
        .panel
        .iter()
        .enumerate()
        .map(|(idx, f)| {
            let mut rmse_sum = vec![0.0; n];
            let mut iters = 0.0;
            let mut ok = 0usize;
            let mut trace = cfg.record_traces.then(|| vec![vec![0.0; l]; cfg.steps]);
            for o in &outcomes {
                if let (Ok(run), Some(r)) = (&o.runs[idx], &o.rmse[idx]) {
                    ok += 1;
                    rmse_sum.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                    iters += run.mean_iterations();
                    if let Some(t) = trace.as_mut() {
                        add_into(t, &run.lambdas);
                    }
                }
            }
            let denom = ok.max(1) as f64;
            if let Some(t) = trace.as_mut() {
                t.iter_mut().flatten().for_each(|v| *v /= denom);
            }
            EstimatorResult {
                name: f.name.clone(),
                rmse: if ok > 0 { rmse_sum.iter().map(|v| v / denom).collect() } else { vec![f64::NAN; n] },
                rmse_per_seed: outcomes.iter().map(|o| o.rmse[idx].clone()).collect(),
                mean_iterations: if ok > 0 { iters / denom } else { f64::NAN },
                divergences: outcomes.len() - ok,
                wall_time_s: outcomes.iter().map(|o| o.times[idx]).sum(),
                lambda_trace: trace,
            }
        })
        .collect();
    Ok(PanelResult {
        experiment: cfg.experiment,
        case: cfg.case,
        steps: cfg.steps,
        seeds: cfg.seeds.clone(),
        estimators,
        lambda_true,
    })
}
