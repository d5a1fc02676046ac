use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_matrix, scaled_kernel};
use super::{Hyperparameters, Input, Provenance, TrainingSet, INPUT_DIM};
use crate::error::{Error, Result};
use crate::optim::{self, LbfgsConfig};

/// Diagonal jitter ladder tried in order when factorizing `K + σ²I`.
pub(crate) const JITTER_LADDER: [f64; 4] = [1e-9, 1e-8, 1e-7, 1e-6];

/// Log-space box for the hyperparameter search.
const LOG_PARAM_BOUNDS: (f64, f64) = (-25.0, 25.0);

const NEGATIVE_VARIANCE_WARNING: f64 = -1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            max_iterations: 200,
        }
    }
}

/// Posterior of every wrench component at one query. Components without a
/// model report zero mean and zero standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vector6<f64>,
    pub std: Vector6<f64>,
}

/// GP of a single wrench component.
#[derive(Clone, Debug)]
pub struct AxisModel {
    axis: usize,
    hyper: Hyperparameters,
    targets: DVector<f64>,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
    inv_sq: [f64; INPUT_DIM],
}

impl AxisModel {
    fn build(inputs: &[Input], axis: usize, targets: DVector<f64>, hyper: Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        let k = kernel_matrix(inputs, &hyper);
        let (chol, jitter) = factorize(&k, hyper.noise_variance)
            .ok_or_else(|| Error::Cholesky(format!("axis {axis}: K + σ²I is not positive-definite")))?;
        Self::from_factor(axis, targets, hyper, chol, jitter)
    }

    fn build_with_jitter(inputs: &[Input], axis: usize, targets: DVector<f64>, hyper: Hyperparameters, jitter: f64) -> Result<Self> {
        hyper.validate()?;
        let mut k = kernel_matrix(inputs, &hyper);
        for i in 0..k.nrows() {
            k[(i, i)] += hyper.noise_variance + jitter;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::Cholesky(format!("axis {axis}: stored factorization does not reproduce")))?;
        Self::from_factor(axis, targets, hyper, chol, jitter)
    }

    fn from_factor(axis: usize, targets: DVector<f64>, hyper: Hyperparameters, chol: Cholesky<f64, Dyn>, jitter: f64) -> Result<Self> {
        let alpha = chol.solve(&targets);
        let n = targets.len() as f64;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_marginal_likelihood =
            -0.5 * targets.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        let inv_sq = hyper.inverse_squared_lengthscales();
        Ok(Self {
            axis,
            hyper,
            targets,
            jitter,
            chol,
            alpha,
            log_marginal_likelihood,
            inv_sq,
        })
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Extra diagonal added to `K + σ²I` for the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn cross_covariance(&self, inputs: &[Input], x: &Input) -> DVector<f64> {
        DVector::from_iterator(
            inputs.len(),
            inputs.iter().map(|xi| scaled_kernel(x, xi, self.hyper.signal_variance, &self.inv_sq)),
        )
    }

    fn mean(&self, inputs: &[Input], x: &Input) -> f64 {
        inputs
            .iter()
            .zip(self.alpha.iter())
            .map(|(xi, a)| a * scaled_kernel(x, xi, self.hyper.signal_variance, &self.inv_sq))
            .sum()
    }

    fn mean_and_gradient(&self, inputs: &[Input], x: &Input) -> (f64, Vector6<f64>) {
        let mut mean = 0.0;
        let mut grad = Vector6::zeros();
        for (xi, a) in inputs.iter().zip(self.alpha.iter()) {
            let w = a * scaled_kernel(x, xi, self.hyper.signal_variance, &self.inv_sq);
            mean += w;
            for d in 0..INPUT_DIM {
                grad[d] -= w * (x[d] - xi[d]) * self.inv_sq[d];
            }
        }
        (mean, grad)
    }

    fn mean_and_variance(&self, inputs: &[Input], x: &Input) -> (f64, f64) {
        let k_star = self.cross_covariance(inputs, x);
        let mean = k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a positive diagonal");
        let var = self.hyper.signal_variance + self.hyper.noise_variance - v.norm_squared();
        if var < NEGATIVE_VARIANCE_WARNING {
            log::warn!("axis {}: negative posterior variance {var:e} clipped to zero", self.axis);
        }
        (mean, var.max(0.0))
    }
}

/// Trained mismatch model over all six wrench components.
#[derive(Clone, Debug)]
pub struct GpModel {
    inputs: Vec<Input>,
    axes: Vec<AxisModel>,
    seed: u64,
    provenance: Provenance,
}

impl GpModel {
    /// Model without data: zero mean and zero uncertainty everywhere.
    pub fn zero() -> Self {
        Self {
            inputs: Vec::new(),
            axes: Vec::new(),
            seed: 0,
            provenance: Provenance::default(),
        }
    }

    /// Condition on the data with fixed hyperparameters per component.
    pub fn with_hyperparameters(inputs: Vec<Input>, components: Vec<(usize, Vec<f64>, Hyperparameters)>) -> Result<Self> {
        check_inputs(&inputs)?;
        let mut axes = Vec::with_capacity(components.len());
        for (axis, targets, hyper) in components {
            check_axis(axis, &targets, inputs.len(), &axes)?;
            axes.push(AxisModel::build(&inputs, axis, DVector::from_vec(targets), hyper)?);
        }
        axes.sort_by_key(|a| a.axis);
        Ok(Self {
            inputs,
            axes,
            seed: 0,
            provenance: Provenance::default(),
        })
    }

    pub(crate) fn restore(inputs: Vec<Input>, components: Vec<(usize, Vec<f64>, Hyperparameters, f64)>, seed: u64, provenance: Provenance) -> Result<Self> {
        check_inputs(&inputs)?;
        let mut axes = Vec::with_capacity(components.len());
        for (axis, targets, hyper, jitter) in components {
            check_axis(axis, &targets, inputs.len(), &axes)?;
            axes.push(AxisModel::build_with_jitter(&inputs, axis, DVector::from_vec(targets), hyper, jitter)?);
        }
        Ok(Self {
            inputs,
            axes,
            seed,
            provenance,
        })
    }

    /// Maximum-likelihood fit of every component present in `train`, with
    /// `cfg.restarts` restarts per component. Restarts run in parallel; the
    /// best restart wins and ties go to the lowest restart index.
    pub fn fit(train: &TrainingSet, cfg: &FitConfig) -> Result<Self> {
        train.validate()?;
        if train.len() < 5 {
            return Err(Error::InvalidParameter(format!(
                "at least 5 training points are required, got {}",
                train.len()
            )));
        }
        if cfg.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        let inputs: Vec<Input> = (0..train.len()).map(|r| train.input(r)).collect();
        let sq_diffs = squared_differences(&inputs);
        let input_scale: [f64; INPUT_DIM] = std::array::from_fn(|d| {
            let s = std_dev(inputs.iter().map(|x| x[d]));
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        });

        let jobs: Vec<(usize, usize)> = (0..train.axes.len())
            .flat_map(|k| (0..cfg.restarts).map(move |r| (k, r)))
            .collect();
        let targets: Vec<DVector<f64>> = train
            .axes
            .iter()
            .map(|&a| DVector::from_vec(train.axis_targets(a).expect("axis listed")))
            .collect();

        let results: Vec<Option<(f64, Vec<f64>)>> = jobs
            .par_iter()
            .map(|&(k, restart)| {
                let axis = train.axes[k];
                let y = &targets[k];
                let x0 = initial_guess(cfg.seed, axis, restart, &input_scale, y);
                let objective = |p: &DVector<f64>| negative_log_likelihood(&sq_diffs, y, p.as_slice());
                let lbfgs = LbfgsConfig {
                    max_iterations: cfg.max_iterations,
                    gradient_tolerance: 1e-6,
                    value_tolerance: 1e-10,
                    ..LbfgsConfig::default()
                };
                match optim::minimize(objective, DVector::from_vec(x0.to_vec()), &lbfgs) {
                    Some(m) => Some((m.value, m.x.as_slice().to_vec())),
                    None => {
                        log::warn!("axis {axis} restart {restart}: factorization failed at the initial guess, skipped");
                        None
                    }
                }
            })
            .collect();

        let mut axes = Vec::with_capacity(train.axes.len());
        for (k, &axis) in train.axes.iter().enumerate() {
            let mut best: Option<&(f64, Vec<f64>)> = None;
            for r in 0..cfg.restarts {
                if let Some(candidate) = &results[k * cfg.restarts + r] {
                    if best.is_none_or(|b| candidate.0 < b.0) {
                        best = Some(candidate);
                    }
                }
            }
            let (_, params) = best.ok_or_else(|| Error::Cholesky(format!("axis {axis}: every restart failed")))?;
            let hyper = Hyperparameters::from_log(params);
            axes.push(AxisModel::build(&inputs, axis, targets[k].clone(), hyper)?);
        }

        Ok(Self {
            inputs,
            axes,
            seed: cfg.seed,
            provenance: train.provenance.clone(),
        })
    }

    pub fn inputs(&self) -> &[Input] {
        &self.inputs
    }

    pub fn axes(&self) -> &[AxisModel] {
        &self.axes
    }

    pub fn axis(&self, axis: usize) -> Option<&AxisModel> {
        self.axes.iter().find(|a| a.axis == axis)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_trained(&self) -> bool {
        !self.axes.is_empty()
    }

    pub fn predict(&self, x: &Input) -> Prediction {
        let mut mean = Vector6::zeros();
        let mut std = Vector6::zeros();
        for a in &self.axes {
            let (m, v) = a.mean_and_variance(&self.inputs, x);
            mean[a.axis] = m;
            std[a.axis] = v.sqrt();
        }
        Prediction { mean, std }
    }

    pub fn predict_mean(&self, x: &Input) -> Vector6<f64> {
        let mut mean = Vector6::zeros();
        for a in &self.axes {
            mean[a.axis] = a.mean(&self.inputs, x);
        }
        mean
    }

    /// Jacobian of the posterior mean: row `l` is `∂μ_l/∂ξ`.
    pub fn predict_mean_gradient(&self, x: &Input) -> Matrix6<f64> {
        self.mean_and_jacobian(x).1
    }

    pub fn mean_and_jacobian(&self, x: &Input) -> (Vector6<f64>, Matrix6<f64>) {
        let mut mean = Vector6::zeros();
        let mut jac = Matrix6::zeros();
        for a in &self.axes {
            let (m, g) = a.mean_and_gradient(&self.inputs, x);
            mean[a.axis] = m;
            jac.set_row(a.axis, &g.transpose());
        }
        (mean, jac)
    }

    /// Largest posterior standard deviation over the modelled components.
    pub fn max_std(&self, x: &Input) -> f64 {
        self.predict(x).std.max()
    }

    /// Median over the training inputs of the per-input worst-axis posterior
    /// standard deviation.
    pub fn median_training_std(&self) -> f64 {
        if self.inputs.is_empty() {
            return 0.0;
        }
        let mut stds: Vec<f64> = self.inputs.iter().map(|x| self.max_std(x)).collect();
        stds.sort_by(f64::total_cmp);
        let n = stds.len();
        if n % 2 == 1 {
            stds[n / 2]
        } else {
            0.5 * (stds[n / 2 - 1] + stds[n / 2])
        }
    }
}

fn check_inputs(inputs: &[Input]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("a GP needs at least one input".into()));
    }
    if inputs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("GP inputs"));
    }
    Ok(())
}

fn check_axis(axis: usize, targets: &[f64], n: usize, existing: &[AxisModel]) -> Result<()> {
    if axis >= INPUT_DIM || existing.iter().any(|a| a.axis == axis) {
        return Err(Error::InvalidParameter(format!("invalid or repeated axis {axis}")));
    }
    if targets.len() != n {
        return Err(Error::InvalidParameter(format!(
            "axis {axis}: {} targets for {n} inputs",
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("GP targets"));
    }
    Ok(())
}

/// Cholesky of `K + (σ² + jitter) I`, escalating the jitter on failure.
pub(crate) fn factorize(k: &DMatrix<f64>, noise_variance: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    JITTER_LADDER.iter().find_map(|&jitter| {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise_variance + jitter;
        }
        m.cholesky().map(|c| (c, jitter))
    })
}

fn squared_differences(inputs: &[Input]) -> Vec<DMatrix<f64>> {
    let n = inputs.len();
    (0..INPUT_DIM)
        .map(|d| DMatrix::from_fn(n, n, |i, j| (inputs[i][d] - inputs[j][d]).powi(2)))
        .collect()
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn initial_guess(seed: u64, axis: usize, restart: usize, input_scale: &[f64; INPUT_DIM], y: &DVector<f64>) -> [f64; INPUT_DIM + 2] {
    let target_var = {
        let v = y.norm_squared() / y.len() as f64;
        if v > 1e-12 {
            v
        } else {
            1e-6
        }
    };
    let mut base = [0.0; INPUT_DIM + 2];
    base[0] = target_var.ln();
    for d in 0..INPUT_DIM {
        base[1 + d] = input_scale[d].ln();
    }
    base[INPUT_DIM + 1] = (0.1 * target_var).ln();
    if restart == 0 {
        return base;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((axis * 1_000 + restart) as u64);
    let decade = std::f64::consts::LN_10;
    base.map(|p| p + rng.random_range(-2.0..2.0) * decade)
}

/// Negative log marginal likelihood and its gradient with respect to
/// `[ln σ_f², ln ℓ₁ … ln ℓ₆, ln σ²]`.
pub(crate) fn negative_log_likelihood(sq_diffs: &[DMatrix<f64>], y: &DVector<f64>, log_params: &[f64]) -> Option<(f64, DVector<f64>)> {
    if log_params.iter().any(|p| !(LOG_PARAM_BOUNDS.0..=LOG_PARAM_BOUNDS.1).contains(p)) {
        return None;
    }
    let hyper = Hyperparameters::from_log(log_params);
    let inv_sq = hyper.inverse_squared_lengthscales();
    let n = y.len();
    let k_se = DMatrix::from_fn(n, n, |i, j| {
        let r2: f64 = (0..INPUT_DIM).map(|d| sq_diffs[d][(i, j)] * inv_sq[d]).sum();
        hyper.signal_variance * (-0.5 * r2).exp()
    });
    let (chol, _) = factorize(&k_se, hyper.noise_variance)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let value = 0.5 * y.dot(&alpha) + 0.5 * log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // dNLL/dθ = ½ tr((K⁻¹ − ααᵀ) ∂K/∂θ)
    let mut w = chol.inverse();
    w.ger(-1.0, &alpha, &alpha, 1.0);
    let mut grad = DVector::zeros(INPUT_DIM + 2);
    let wk = w.component_mul(&k_se);
    grad[0] = 0.5 * wk.sum();
    for d in 0..INPUT_DIM {
        grad[1 + d] = 0.5 * wk.dot(&sq_diffs[d]) * inv_sq[d];
    }
    grad[INPUT_DIM + 1] = 0.5 * hyper.noise_variance * w.trace();
    if !value.is_finite() {
        return None;
    }
    Some((value, grad))
}
