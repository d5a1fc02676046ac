//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Objectives return `None` where they cannot be evaluated (for example a
//! failed Cholesky factorization); the line search treats that as an
//! infinitely bad point and backtracks.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the infinity norm of the gradient drops below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative decrease of one iteration falls below this.
    pub value_tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            value_tolerance: 1e-12,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ValueTolerance,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

/// Minimize `f` from `x0`. Returns `None` only if `f` fails at `x0`.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, cfg: &LbfgsConfig) -> Option<Minimum>
where
    F: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let (mut value, mut grad) = f(&x0).filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))?;
    let mut x = x0;
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(cfg.memory);

    for iteration in 0..cfg.max_iterations {
        if grad.amax() < cfg.gradient_tolerance {
            return Some(Minimum { x, value, gradient: grad, iterations: iteration, termination: Termination::GradientTolerance });
        }

        let mut direction = -two_loop(&grad, &history);
        let mut slope = direction.dot(&grad);
        if !(slope < 0.0) {
            // Lost descent; fall back to steepest descent.
            history.clear();
            direction = -&grad;
            slope = -grad.norm_squared();
        }

        let mut step = if history.is_empty() { (1.0 / grad.norm()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let candidate = &x + &direction * step;
            if let Some((v, g)) = f(&candidate) {
                if v.is_finite() && g.iter().all(|x| x.is_finite()) && v <= value + cfg.armijo * step * slope {
                    accepted = Some((candidate, v, g));
                    break;
                }
            }
            step *= cfg.backtrack;
        }

        let Some((x_new, v_new, g_new)) = accepted else {
            return Some(Minimum { x, value, gradient: grad, iterations: iteration, termination: Termination::LineSearchFailed });
        };

        let s = &x_new - &x;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let decrease = value - v_new;
        x = x_new;
        grad = g_new;
        let previous = value;
        value = v_new;
        if decrease <= cfg.value_tolerance * previous.abs().max(value.abs()).max(1.0) {
            return Some(Minimum { x, value, gradient: grad, iterations: iteration + 1, termination: Termination::ValueTolerance });
        }
    }

    Some(Minimum { x, value, gradient: grad, iterations: cfg.max_iterations, termination: Termination::MaxIterations })
}

fn two_loop(grad: &DVector<f64>, history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = DVector::from_vec(vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ]);
        Some((v, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let cfg = LbfgsConfig { max_iterations: 500, value_tolerance: 0.0, ..LbfgsConfig::default() };
        let m = minimize(rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &cfg).unwrap();
        assert_eq!(m.termination, Termination::GradientTolerance);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn solves_ill_conditioned_quadratic() {
        let scales = [1.0, 10.0, 100.0, 1e3, 1e4, 1e5];
        let f = |x: &DVector<f64>| {
            let v = x.iter().zip(scales).map(|(xi, s)| 0.5 * s * (xi - 1.0).powi(2)).sum();
            let g = DVector::from_iterator(6, x.iter().zip(scales).map(|(xi, s)| s * (xi - 1.0)));
            Some((v, g))
        };
        let cfg = LbfgsConfig { max_iterations: 200, value_tolerance: 0.0, ..LbfgsConfig::default() };
        let m = minimize(f, DVector::zeros(6), &cfg).unwrap();
        assert!((m.x.add_scalar(-1.0)).amax() < 1e-8);
    }

    #[test]
    fn backtracks_out_of_undefined_region() {
        // Undefined for x > 2; minimum at 1.5.
        let f = |x: &DVector<f64>| {
            (x[0] <= 2.0).then(|| ((x[0] - 1.5).powi(2), DVector::from_element(1, 2.0 * (x[0] - 1.5))))
        };
        let m = minimize(f, DVector::from_element(1, -10.0), &LbfgsConfig::default()).unwrap();
        assert!((m.x[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn fails_cleanly_at_bad_start() {
        let f = |_: &DVector<f64>| None;
        assert!(minimize(f, DVector::zeros(2), &LbfgsConfig::default()).is_none());
    }
}
