use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vrkf::convergence::{
    check_family_conditions, check_loss_conditions, laplace_gaussian, phi, psi, required_nu, scan_bounds,
    steady_dof, steady_lambda_stats, time_constant, transient, xi_lower_bound, BoundInputs, LossFamily, LossGrid,
};
use vrkf::filters::{robust_update, whiten, FixedPointTol};
use vrkf::linalg::l1_norm;
use vrkf::losses::{ChannelLosses, LossKind, RobustLoss};

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Random whitened measurement-update problem with zero prior mean, so the
/// fixed-point iteration starts at the origin of the γ ball.
struct Instance {
    x_prior: DVector<f64>,
    y: DVector<f64>,
    c: DMatrix<f64>,
    wh: vrkf::filters::Whitened,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let p = random_spd(rng, n);
    let r = random_spd(rng, m);
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x_prior = DVector::zeros(n);
    let y = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
    let wh = whiten(&x_prior, &p, &r, &y, &c).unwrap();
    Instance { x_prior, y, c, wh }
}

#[test]
fn kalman_form_iteration_contracts_under_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let inst = instance(&mut rng);
        let l = inst.wh.channels();
        let base = BoundInputs::from_whitened(&inst.wh, vec![1.0; l], 1.0, 0.9).unwrap();
        let xi = xi_lower_bound(&base).unwrap();
        let inp = base.with_gamma(2.0 * xi).unwrap();
        let report = required_nu(&inp).unwrap();
        assert!(phi(report.nu_star, &inp) <= inp.gamma * (1.0 + 1e-9));
        assert!(psi(report.nu_plus, &inp) <= inp.eta * (1.0 + 1e-9));

        let nu = 2.0 * report.nu_required();
        let losses = ChannelLosses::new(vec![RobustLoss::student(nu, 1.0).unwrap(); l], inst.wh.n(), l - inst.wh.n()).unwrap();
        let mut prev = inst.x_prior.clone();
        let mut last_step = f64::INFINITY;
        for iters in 1..=12 {
            let tol = FixedPointTol { eps: 1e-300, max_iter: iters };
            let sol = robust_update(&inst.wh, &losses, &inst.x_prior, &inst.y, &inst.c, tol).unwrap();
            assert!(l1_norm(&sol.x) <= inp.gamma, "iterate left the ball");
            let step = l1_norm(&(&sol.x - &prev));
            assert!(step <= last_step || step < 1e-13, "step grew from {last_step} to {step}");
            last_step = step;
            prev = sol.x;
        }
    }
}

#[test]
fn required_nu_grows_with_the_data_scale() {
    let w = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let small = BoundInputs::new(w.clone(), DVector::from_vec(vec![0.1, -0.2]), vec![1.0; 2], 1.0, 0.5).unwrap();
    let large = BoundInputs::new(w, DVector::from_vec(vec![1.0, -2.0]), vec![1.0; 2], 10.0, 0.5).unwrap();
    // same γ/ξ ratio, larger residuals demand more degrees of freedom
    let a = required_nu(&small.with_gamma(2.0 * xi_lower_bound(&small).unwrap()).unwrap()).unwrap();
    let b = required_nu(&large.with_gamma(2.0 * xi_lower_bound(&large).unwrap()).unwrap()).unwrap();
    assert!(b.nu_required() > a.nu_required());
}

#[test]
fn scan_reports_the_worst_instance() {
    let mk = |t: f64| {
        let inp = BoundInputs::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, t), vec![1.0], 1.0, 0.5).unwrap();
        let xi = xi_lower_bound(&inp).unwrap();
        inp.with_gamma(3.0 * xi).unwrap()
    };
    let instances = vec![mk(0.5), mk(4.0), mk(1.0)];
    let scan = scan_bounds(&instances).unwrap();
    assert_eq!(scan.steps, 3);
    assert_eq!(scan.worst_step, 1);
    assert_eq!(scan.max_xi, 4.0);
    assert!(scan_bounds(std::iter::empty::<&BoundInputs>()).is_err());
}

#[test]
fn builtin_losses_by_condition() {
    let grid = LossGrid::default();
    for kind in LossKind::ALL {
        let rep = check_loss_conditions(kind, &grid);
        assert!(rep.condition_passed(1), "{}", kind.name());
        assert!(rep.condition_passed(3), "{}", kind.name());
    }
    for kind in [LossKind::StudentLog, LossKind::ExponentialWelsch, LossKind::SquareRoot] {
        assert!(check_loss_conditions(kind, &grid).all_passed(), "{}", kind.name());
    }
    // The power family keeps weight 1/(τ²(1 + e²/(2τ²))) as ν → 0⁺.
    let power = check_loss_conditions(LossKind::PowerFamily, &grid);
    let failed: Vec<_> = power.failures().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, vec!["d vanishes as nu -> 0+"]);
}

/// Huber-type loss with weight `min(1, ν/|e|)/τ²`.
struct Truncated;

impl LossFamily for Truncated {
    fn name(&self) -> String {
        "truncated".into()
    }
    fn value(&self, nu: f64, tau2: f64, e: f64) -> f64 {
        let a = e.abs();
        if a <= nu { 0.5 * a * a / tau2 } else { (nu * a - 0.5 * nu * nu) / tau2 }
    }
    fn weight(&self, nu: f64, tau2: f64, e: f64) -> f64 {
        (nu / e.abs()).min(1.0) / tau2
    }
    fn iota(&self, nu: f64, tau2: f64, e: f64) -> f64 {
        let a = e.abs();
        if a <= nu { 0.0 } else { -nu / (a * a * a * tau2) }
    }
}

#[test]
fn custom_family_runs_through_the_checker() {
    let rep = check_family_conditions(&Truncated, &LossGrid::default());
    assert_eq!(rep.loss, "truncated");
    assert!(rep.condition_passed(1));
    assert!(rep.condition_passed(2));
    assert!(rep.condition_passed(3));
}

struct Growing;

impl LossFamily for Growing {
    fn name(&self) -> String {
        "growing".into()
    }
    fn value(&self, _nu: f64, tau2: f64, e: f64) -> f64 {
        (e * e / tau2).powi(2)
    }
    fn weight(&self, _nu: f64, tau2: f64, e: f64) -> f64 {
        4.0 * e * e / (tau2 * tau2)
    }
    fn iota(&self, _nu: f64, tau2: f64, _e: f64) -> f64 {
        8.0 / (tau2 * tau2)
    }
}

#[test]
fn unbounded_weight_is_flagged() {
    let rep = check_family_conditions(&Growing, &LossGrid::default());
    assert!(!rep.condition_passed(2));
    assert!(rep.failures().any(|c| c.witness.is_some()));
}

#[test]
fn tracking_predictions() {
    assert_eq!(steady_dof(0.99).unwrap(), 1.0 / (1.0 - 0.99));
    assert_relative_eq!(time_constant(0.99).unwrap(), 99.499, epsilon = 1e-3);
    let p = (time_constant(0.98).unwrap()).round() as u32;
    assert_relative_eq!(transient(2.4, 0.98, p).unwrap(), 2.4 * (-1.0f64).exp(), max_relative = 0.02);
    assert_eq!(transient(2.4, 0.98, 0).unwrap(), 2.4);
    assert!(time_constant(1.0).is_err());
    assert!(steady_dof(0.0).is_err());

    let s = steady_lambda_stats(0.98, 2.0, 0.1).unwrap();
    assert_relative_eq!(s.steady_mean, 2.2);
    assert_relative_eq!(s.steady_var, 2.0 * 0.02 * 2.1 * 2.1 / 1.98);
}

#[test]
fn laplace_approximation_values() {
    let (mu, s2) = laplace_gaussian(100.0, 1.0).unwrap();
    assert_eq!(mu, 1.0);
    assert_relative_eq!(s2, 20_000.0 / 101f64.powi(3), max_relative = 1e-14);
    assert!((s2 - 0.019406).abs() < 1e-5);
    let (_, s2b) = laplace_gaussian(100.0, 3.0).unwrap();
    assert_relative_eq!(s2b, 9.0 * s2, max_relative = 1e-14);
    assert!(laplace_gaussian(0.0, 1.0).is_err());
}
