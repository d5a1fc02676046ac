//! Online wrench compensation.
//!
//! Given a desired wrench `W_des`, find `ΔW` with `ΔW + μ(W_des + ΔW) = 0`, so
//! that commanding `W_des + ΔW` makes the realized wrench equal `W_des` under
//! the learned mismatch mean `μ`. The fixed point is found by minimizing its
//! squared residual. The result is then blended towards a decaying copy of
//! the previous compensation when the model is uncertain at the query.

use nalgebra::{DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optim::{self, LbfgsConfig, Termination};
use crate::rigid_body::{Frame, Wrench};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct CompensatorConfig {
    /// Accept the optimum outright below this residual cost.
    pub residual_threshold: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Weight on `‖W_des + ΔW‖²`; zero disables the term.
    pub regularization: f64,
    /// Per-tick decay `a` of the previous compensation under high uncertainty.
    pub filter_a: f64,
    /// Sigmoid steepness `κ`, per N·m.
    pub filter_kappa: f64,
    /// Uncertainty threshold `σ_th`, N·m. `None` derives it from the model.
    pub sigma_threshold: Option<f64>,
    /// Multiple of the median training-input posterior std used when
    /// `sigma_threshold` is `None`.
    pub sigma_threshold_scale: f64,
    pub warm_start: bool,
    /// Disabling passes the optimum through unfiltered.
    pub uncertainty_filter: bool,
}

impl Default for CompensatorConfig {
    fn default() -> Self {
        Self {
            residual_threshold: 1e-4,
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            regularization: 0.0,
            filter_a: 0.9,
            filter_kappa: 100.0,
            sigma_threshold: None,
            sigma_threshold_scale: 1.5,
            warm_start: true,
            uncertainty_filter: true,
        }
    }
}

impl CompensatorConfig {
    /// Preset for commands near saturation, where the residual can have
    /// locally flat regions.
    pub fn saturating() -> Self {
        Self {
            regularization: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.filter_a > 0.0 && self.filter_a < 1.0) {
            return Err(Error::InvalidParameter(format!("filter_a must lie in (0, 1), got {}", self.filter_a)));
        }
        if !(self.filter_kappa > 0.0 && self.filter_kappa.is_finite()) {
            return Err(Error::InvalidParameter("filter_kappa must be positive".into()));
        }
        if !(self.residual_threshold > 0.0) || self.sigma_threshold.is_some_and(|s| !(s > 0.0)) || !(self.sigma_threshold_scale > 0.0) {
            return Err(Error::InvalidParameter("thresholds must be positive".into()));
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::InvalidParameter("regularization must be non-negative".into()));
        }
        Ok(())
    }

    /// `σ_th` for a given model.
    pub fn resolve_sigma_threshold(&self, model: &GpModel) -> f64 {
        self.sigma_threshold
            .unwrap_or_else(|| self.sigma_threshold_scale * model.median_training_std())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatorState {
    /// Compensation returned by the previous filter update.
    pub previous: Vector6<f64>,
    pub beta: f64,
    /// Last optimizer solution, used as warm start.
    pub iterate: Option<Vector6<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    /// Residual below the acceptance threshold.
    Converged,
    /// Optimum kept because it beats zero compensation.
    BetterThanZero,
    /// Zero compensation had the lower cost.
    FellBackToZero,
    /// No descent step was found from the start point.
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Solution {
    pub delta: Vector6<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub outcome: SolveOutcome,
}

/// Fixed-point residual cost and its gradient.
pub fn residual_cost(w_des: &Vector6<f64>, delta: &Vector6<f64>, model: &GpModel, regularization: f64) -> (f64, Vector6<f64>) {
    let cmd = w_des + delta;
    let (mean, jac) = model.mean_and_jacobian(&cmd);
    let r = mean + delta;
    let mut cost = r.norm_squared();
    let mut grad = 2.0 * (jac + Matrix6::identity()).transpose() * r;
    if regularization > 0.0 {
        cost += regularization * cmd.norm_squared();
        grad += 2.0 * regularization * cmd;
    }
    (cost, grad)
}

pub fn solve_compensation(w_des: &Wrench, model: &GpModel, cfg: &CompensatorConfig, state: &mut CompensatorState) -> Result<Solution> {
    w_des.expect_frame(Frame::Body)?;
    if !w_des.is_finite() {
        return Err(Error::NonFinite("desired wrench"));
    }
    let w = w_des.to_vector();
    let lambda = cfg.regularization;
    let cost_at = |d: &Vector6<f64>| residual_cost(&w, d, model, lambda).0;
    let zero_cost = cost_at(&Vector6::zeros());

    let start = match (cfg.warm_start, state.iterate) {
        (true, Some(prev)) => prev,
        _ => Vector6::zeros(),
    };
    let objective = |x: &DVector<f64>| {
        let d = Vector6::from_column_slice(x.as_slice());
        let (c, g) = residual_cost(&w, &d, model, lambda);
        Some((c, DVector::from_column_slice(g.as_slice())))
    };
    let lbfgs = LbfgsConfig {
        max_iterations: cfg.max_iterations,
        gradient_tolerance: cfg.gradient_tolerance,
        value_tolerance: 0.0,
        ..LbfgsConfig::default()
    };
    let min = optim::minimize(objective, DVector::from_column_slice(start.as_slice()), &lbfgs)
        .ok_or(Error::NonFinite("compensation cost"))?;
    let optimum = Vector6::from_column_slice(min.x.as_slice());

    let solution = if min.value < cfg.residual_threshold {
        Solution { delta: optimum, cost: min.value, iterations: min.iterations, outcome: SolveOutcome::Converged }
    } else if min.termination == Termination::LineSearchFailed && min.iterations == 0 {
        log::debug!("compensation solve made no progress (cost {:.3e}); using zero", min.value);
        Solution { delta: Vector6::zeros(), cost: zero_cost, iterations: 0, outcome: SolveOutcome::Diverged }
    } else if min.value < zero_cost {
        Solution { delta: optimum, cost: min.value, iterations: min.iterations, outcome: SolveOutcome::BetterThanZero }
    } else {
        Solution { delta: Vector6::zeros(), cost: zero_cost, iterations: min.iterations, outcome: SolveOutcome::FellBackToZero }
    };
    state.iterate = Some(solution.delta);
    Ok(solution)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Filtered {
    pub delta: Vector6<f64>,
    pub beta: f64,
    /// Worst-axis posterior std at `W_des + ΔW*`.
    pub sigma: f64,
}

/// `β = 1 / (1 + e^{−κ(σ − σ_th)})`
///
/// Clamped to the open interval so the previous compensation always decays
/// and the optimum always contributes, even where the logistic rounds to 0 or 1.
pub fn uncertainty_weight(sigma: f64, sigma_threshold: f64, kappa: f64) -> f64 {
    let beta = 1.0 / (1.0 + (-kappa * (sigma - sigma_threshold)).exp());
    beta.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Blend the optimum with the decayed previous compensation,
/// `ΔW = a β ΔW_prev + (1 − β) ΔW*`, and store the result as the new
/// previous value.
pub fn uncertainty_filter(
    optimum: &Vector6<f64>,
    w_des: &Wrench,
    model: &GpModel,
    cfg: &CompensatorConfig,
    sigma_threshold: f64,
    state: &mut CompensatorState,
) -> Filtered {
    let sigma = model.max_std(&(w_des.to_vector() + optimum));
    let (delta, beta) = if cfg.uncertainty_filter {
        let beta = uncertainty_weight(sigma, sigma_threshold, cfg.filter_kappa);
        (cfg.filter_a * beta * state.previous + (1.0 - beta) * optimum, beta)
    } else {
        (*optimum, 0.0)
    };
    state.previous = delta;
    state.beta = beta;
    Filtered { delta, beta, sigma }
}

/// Per-tick telemetry of the compensator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tick {
    pub delta: Vector6<f64>,
    pub optimum: Vector6<f64>,
    pub beta: f64,
    pub sigma: f64,
    pub cost: f64,
    pub iterations: usize,
    pub outcome: SolveOutcome,
}

/// Solver, filter and their state bundled for a control loop.
#[derive(Clone, Debug)]
pub struct Compensator<'m> {
    model: &'m GpModel,
    cfg: CompensatorConfig,
    sigma_threshold: f64,
    state: CompensatorState,
}

impl<'m> Compensator<'m> {
    pub fn new(model: &'m GpModel, cfg: CompensatorConfig) -> Result<Self> {
        cfg.validate()?;
        let sigma_threshold = cfg.resolve_sigma_threshold(model);
        Ok(Self { model, cfg, sigma_threshold, state: CompensatorState::default() })
    }

    pub fn sigma_threshold(&self) -> f64 {
        self.sigma_threshold
    }

    pub fn state(&self) -> &CompensatorState {
        &self.state
    }

    pub fn step(&mut self, w_des: &Wrench) -> Result<Tick> {
        let solution = solve_compensation(w_des, self.model, &self.cfg, &mut self.state)?;
        let filtered = uncertainty_filter(&solution.delta, w_des, self.model, &self.cfg, self.sigma_threshold, &mut self.state);
        Ok(Tick {
            delta: filtered.delta,
            optimum: solution.delta,
            beta: filtered.beta,
            sigma: filtered.sigma,
            cost: solution.cost,
            iterations: solution.iterations,
            outcome: solution.outcome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Hyperparameters, Input};
    use nalgebra::Vector3;

    fn constant_model(value: f64, sf2: f64) -> GpModel {
        // Dense grid of torque inputs around hover with a constant z target.
        let mut inputs = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    let t = |n: i32| -1.0 + 0.5 * n as f64;
                    inputs.push(Input::new(0.0, 0.0, 39.24, t(i), t(j), t(k)));
                }
            }
        }
        let n = inputs.len();
        let h = Hyperparameters { signal_variance: sf2, lengthscales: [5.0, 5.0, 5.0, 1.0, 1.0, 1.0], noise_variance: 1e-6 };
        GpModel::with_hyperparameters(inputs, vec![(5, vec![value; n], h)]).unwrap()
    }

    fn hover() -> Wrench {
        Wrench::body(Vector3::new(0.0, 0.0, 39.24), Vector3::new(0.1, -0.2, 0.05))
    }

    #[test]
    fn zero_model_gives_zero_compensation() {
        let model = GpModel::zero();
        let mut state = CompensatorState::default();
        let s = solve_compensation(&hover(), &model, &CompensatorConfig::default(), &mut state).unwrap();
        assert!(s.delta.amax() < 1e-6);
        assert!(s.cost < 1e-8);
    }

    #[test]
    fn constant_offset_is_cancelled() {
        let model = constant_model(0.45, 0.3);
        let mut state = CompensatorState::default();
        let s = solve_compensation(&hover(), &model, &CompensatorConfig::default(), &mut state).unwrap();
        assert_eq!(s.outcome, SolveOutcome::Converged);
        assert!((s.delta - Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, -0.45)).amax() < 1e-3, "{}", s.delta);
    }

    #[test]
    fn cost_never_exceeds_zero_compensation() {
        let model = constant_model(0.45, 0.3);
        let cfg = CompensatorConfig { max_iterations: 1, ..CompensatorConfig::default() };
        for scale in [0.0, 1.0, 10.0, 100.0] {
            let w = Wrench::body(Vector3::new(scale, -scale, 39.24), Vector3::new(scale, 0.3, -scale));
            let mut state = CompensatorState::default();
            let s = solve_compensation(&w, &model, &cfg, &mut state).unwrap();
            let zero = residual_cost(&w.to_vector(), &Vector6::zeros(), &model, 0.0).0;
            assert!(s.cost <= zero);
        }
    }

    #[test]
    fn residual_gradient_matches_finite_differences() {
        let model = constant_model(0.45, 0.3);
        let w = hover().to_vector();
        let d = Vector6::new(0.1, -0.1, 0.2, 0.3, -0.2, -0.4);
        for lambda in [0.0, 1e-3] {
            let (_, g) = residual_cost(&w, &d, &model, lambda);
            for j in 0..6 {
                let mut e = Vector6::zeros();
                e[j] = 1e-6;
                let fd = (residual_cost(&w, &(d + e), &model, lambda).0 - residual_cost(&w, &(d - e), &model, lambda).0) / 2e-6;
                assert!((fd - g[j]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn cold_start_is_a_function_of_inputs_only() {
        let model = constant_model(0.45, 0.3);
        let cfg = CompensatorConfig { warm_start: false, ..CompensatorConfig::default() };
        let mut fresh = CompensatorState::default();
        let mut used = CompensatorState { iterate: Some(Vector6::from_element(3.0)), ..CompensatorState::default() };
        let a = solve_compensation(&hover(), &model, &cfg, &mut fresh).unwrap();
        let b = solve_compensation(&hover(), &model, &cfg, &mut used).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigmoid_midpoint() {
        assert_eq!(uncertainty_weight(0.3, 0.3, 20.0), 0.5);
        assert!(uncertainty_weight(0.0, 0.3, 20.0) < 0.01);
        assert!(uncertainty_weight(1.0, 0.3, 20.0) > 0.99);
    }

    #[test]
    fn confident_prediction_passes_through() {
        let model = constant_model(0.45, 0.3);
        let cfg = CompensatorConfig { sigma_threshold: Some(0.5), filter_kappa: 200.0, ..CompensatorConfig::default() };
        let mut state = CompensatorState { previous: Vector6::from_element(1.0), ..CompensatorState::default() };
        let opt = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, -0.45);
        let f = uncertainty_filter(&opt, &hover(), &model, &cfg, 0.5, &mut state);
        assert!(f.beta < 1e-30);
        assert!((f.delta - opt).amax() < 1e-12);
        assert_eq!(state.previous, f.delta);
    }

    #[test]
    fn uncertain_prediction_decays_geometrically() {
        let model = constant_model(0.45, 0.3);
        let cfg = CompensatorConfig { filter_kappa: 200.0, ..CompensatorConfig::default() };
        // Far outside the data the posterior std is √(σ_f² + σ²) ≈ 0.548.
        let far = Wrench::body(Vector3::new(30.0, 0.0, 0.0), Vector3::new(5.0, 5.0, 5.0));
        let mut state = CompensatorState { previous: Vector6::from_element(1.0), ..CompensatorState::default() };
        let mut last = state.previous.norm();
        for _ in 0..20 {
            let f = uncertainty_filter(&Vector6::zeros(), &far, &model, &cfg, 0.05, &mut state);
            assert!(f.beta > 0.999);
            let now = f.delta.norm();
            assert!((now / last - 0.9 * f.beta).abs() < 1e-12);
            last = now;
        }
    }

    #[test]
    fn blend_is_bounded() {
        let model = constant_model(0.45, 0.3);
        let cfg = CompensatorConfig::default();
        for sigma_th in [0.01, 0.3, 0.55, 2.0] {
            let mut state = CompensatorState { previous: Vector6::new(0.2, 0.0, -0.1, 0.3, 0.0, 0.1), ..CompensatorState::default() };
            let prev = state.previous.norm();
            let opt = Vector6::new(0.0, 0.1, 0.0, -0.2, 0.4, 0.0);
            let f = uncertainty_filter(&opt, &hover(), &model, &cfg, sigma_th, &mut state);
            assert!(f.beta > 0.0 && f.beta < 1.0);
            assert!(f.delta.norm() <= (cfg.filter_a * prev).max(opt.norm()) + 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(CompensatorConfig::default().validate().is_ok());
        assert!(CompensatorConfig { filter_a: 1.0, ..CompensatorConfig::default() }.validate().is_err());
        assert!(CompensatorConfig { filter_kappa: 0.0, ..CompensatorConfig::default() }.validate().is_err());
        assert!(CompensatorConfig { sigma_threshold: Some(-1.0), ..CompensatorConfig::default() }.validate().is_err());
        assert_eq!(CompensatorConfig::saturating().regularization, 1e-3);
    }
}
