use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Input, INPUT_DIM};
use crate::error::{Error, Result};

/// Squared-exponential ARD hyperparameters of one output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub signal_variance: f64,
    pub lengthscales: [f64; INPUT_DIM],
    pub noise_variance: f64,
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let ok = std::iter::once(self.signal_variance)
            .chain(self.lengthscales)
            .chain(std::iter::once(self.noise_variance))
            .all(|x| x.is_finite() && x > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("hyperparameters must be positive: {self:?}")))
        }
    }

    /// `[ln σ_f², ln ℓ₁ … ln ℓ₆, ln σ²]`
    pub fn to_log(&self) -> [f64; INPUT_DIM + 2] {
        let mut p = [0.0; INPUT_DIM + 2];
        p[0] = self.signal_variance.ln();
        for d in 0..INPUT_DIM {
            p[1 + d] = self.lengthscales[d].ln();
        }
        p[INPUT_DIM + 1] = self.noise_variance.ln();
        p
    }

    pub fn from_log(p: &[f64]) -> Self {
        Self {
            signal_variance: p[0].exp(),
            lengthscales: std::array::from_fn(|d| p[1 + d].exp()),
            noise_variance: p[INPUT_DIM + 1].exp(),
        }
    }

    pub(crate) fn inverse_squared_lengthscales(&self) -> [f64; INPUT_DIM] {
        std::array::from_fn(|d| 1.0 / (self.lengthscales[d] * self.lengthscales[d]))
    }
}

/// `σ_f² exp(−½ Σ_d (p_d − q_d)² / ℓ_d²)`
pub fn kernel(p: &Input, q: &Input, hyper: &Hyperparameters) -> f64 {
    let inv = hyper.inverse_squared_lengthscales();
    scaled_kernel(p, q, hyper.signal_variance, &inv)
}

#[inline]
pub(crate) fn scaled_kernel(p: &Input, q: &Input, signal_variance: f64, inv_sq: &[f64; INPUT_DIM]) -> f64 {
    let mut r2 = 0.0;
    for d in 0..INPUT_DIM {
        let diff = p[d] - q[d];
        r2 += diff * diff * inv_sq[d];
    }
    signal_variance * (-0.5 * r2).exp()
}

/// Noise-free kernel matrix `K_ij = k(x_i, x_j)`.
pub fn kernel_matrix(inputs: &[Input], hyper: &Hyperparameters) -> DMatrix<f64> {
    let n = inputs.len();
    let inv = hyper.inverse_squared_lengthscales();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hyper.signal_variance;
        for j in 0..i {
            let v = scaled_kernel(&inputs[i], &inputs[j], hyper.signal_variance, &inv);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}
