//! JSON persistence of trained models. Loading refactorizes every component
//! and checks the stored log marginal likelihood against the recomputed one.

use serde::{Deserialize, Serialize};

use super::model::GpModel;
use super::{Hyperparameters, Input, Provenance, INPUT_DIM};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "tiltgp-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    seed: u64,
    provenance: Provenance,
    inputs: Vec<[f64; INPUT_DIM]>,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    axis: usize,
    hyperparameters: Hyperparameters,
    jitter: f64,
    log_marginal_likelihood: f64,
    targets: Vec<f64>,
}

impl GpModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            seed: self.seed(),
            provenance: self.provenance().clone(),
            inputs: self.inputs().iter().map(|x| (*x).into()).collect(),
            components: self
                .axes()
                .iter()
                .map(|a| ComponentFile {
                    axis: a.axis(),
                    hyperparameters: a.hyperparameters().clone(),
                    jitter: a.jitter(),
                    log_marginal_likelihood: a.log_marginal_likelihood(),
                    targets: a.targets().iter().copied().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unsupported model format {:?}", file.format)));
        }
        if file.components.is_empty() {
            return Ok(GpModel::zero());
        }
        let inputs: Vec<Input> = file.inputs.iter().map(|x| Input::from(*x)).collect();
        let stored: Vec<(usize, f64)> = file.components.iter().map(|c| (c.axis, c.log_marginal_likelihood)).collect();
        let model = GpModel::restore(
            inputs,
            file.components
                .into_iter()
                .map(|c| (c.axis, c.targets, c.hyperparameters, c.jitter))
                .collect(),
            file.seed,
            file.provenance,
        )?;
        for (axis, lml) in stored {
            let recomputed = model.axis(axis).expect("restored axis").log_marginal_likelihood();
            if (recomputed - lml).abs() > 1e-6 * lml.abs().max(1.0) {
                return Err(Error::Format(format!(
                    "axis {axis}: stored log likelihood {lml} does not match recomputed {recomputed}"
                )));
            }
        }
        Ok(model)
    }
}
