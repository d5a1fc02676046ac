//! Exact Gaussian-process regression of the wrench mismatch.
//!
//! Each wrench component is an independent single-output GP over the
//! commanded body wrench `ξ = [F, M] ∈ ℝ⁶` with a squared-exponential ARD
//! kernel and zero prior mean. Components without training targets are
//! pinned to a zero mean with zero uncertainty.

mod kernel;
mod kmedoids;
mod model;
mod persist;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernel::{kernel, kernel_matrix, Hyperparameters};
pub use kmedoids::{kmedoids, kmedoids_subsample};
pub use model::{AxisModel, FitConfig, GpModel, Prediction};

/// Dimension of the regression input (a body wrench).
pub const INPUT_DIM: usize = 6;

/// Indices of the torque components within a wrench 6-vector.
pub const TORQUE_AXES: [usize; 3] = [3, 4, 5];

pub type Input = Vector6<f64>;

/// Where a training set came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub episode: String,
    pub seed: u64,
    pub config_hash: String,
    /// Episode time of every row, s.
    pub timestamps: Vec<f64>,
}

/// Regression pairs: commanded wrench in, observed mismatch out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    /// Wrench components that carry targets, in ascending order.
    pub axes: Vec<usize>,
    pub inputs: Vec<[f64; INPUT_DIM]>,
    /// `targets[row][k]` observes component `axes[k]`.
    pub targets: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, row: usize) -> Input {
        Input::from(self.inputs[row])
    }

    /// Targets of one wrench component, if present.
    pub fn axis_targets(&self, axis: usize) -> Option<Vec<f64>> {
        let k = self.axes.iter().position(|&a| a == axis)?;
        Some(self.targets.iter().map(|row| row[k]).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.iter().any(|&a| a >= INPUT_DIM) || !self.axes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Format(format!("invalid target axes {:?}", self.axes)));
        }
        if self.targets.len() != self.inputs.len() {
            return Err(Error::Format("inputs and targets differ in length".into()));
        }
        if self.targets.iter().any(|row| row.len() != self.axes.len()) {
            return Err(Error::Format("target row width does not match axes".into()));
        }
        if !self.provenance.timestamps.is_empty() && self.provenance.timestamps.len() != self.inputs.len() {
            return Err(Error::Format("timestamps do not match rows".into()));
        }
        let finite = self.inputs.iter().flatten().chain(self.targets.iter().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("training set"));
        }
        Ok(())
    }

    /// Keep only the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let timestamps = if self.provenance.timestamps.is_empty() {
            Vec::new()
        } else {
            rows.iter().map(|&r| self.provenance.timestamps[r]).collect()
        };
        Self {
            axes: self.axes.clone(),
            inputs: rows.iter().map(|&r| self.inputs[r]).collect(),
            targets: rows.iter().map(|&r| self.targets[r].clone()).collect(),
            provenance: Provenance {
                timestamps,
                ..self.provenance.clone()
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }
}
