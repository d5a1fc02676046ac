//! Experiment configuration: one TOML file with a section per component.
//!
//! Values missing from the file take the defaults of [`ExperimentConfig`].
//! Overrides of the form `section.key=value` are applied on top of the file;
//! the value is parsed as a TOML literal and falls back to a bare string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actuation::{MismatchParams, VehicleGeometry, ARMS};
use crate::compensator::CompensatorConfig;
use crate::controller::ControllerGains;
use crate::error::{Error, Result};
use crate::gp::FitConfig;
use crate::rigid_body::InertialParams;
use crate::simulator::{Excitation, TrajectorySpec, VehicleConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    pub inertial: InertialParams,
    pub geometry: VehicleGeometry,
    pub measurement_noise_std: f64,
    pub gyroscopic: bool,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let v = VehicleConfig::default();
        Self {
            inertial: v.inertial,
            geometry: v.geometry,
            measurement_noise_std: v.measurement_noise_std,
            gyroscopic: v.gyroscopic,
        }
    }
}

/// A named mismatch preset with optional per-field replacements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchSection {
    pub preset: String,
    /// Seed of the preset's random thrust scale errors.
    pub seed: u64,
    pub interference_gain: Option<f64>,
    pub tilt_loss_gain: Option<f64>,
    pub torque_bias: Option<[f64; 3]>,
    pub thrust_scale: Option<[f64; ARMS]>,
    pub servo_time_constant: Option<f64>,
    pub noise_std: Option<f64>,
}

impl Default for MismatchSection {
    fn default() -> Self {
        Self {
            preset: "voliro-like".into(),
            seed: 0,
            interference_gain: None,
            tilt_loss_gain: None,
            torque_bias: None,
            thrust_scale: None,
            servo_time_constant: None,
            noise_std: None,
        }
    }
}

impl MismatchSection {
    pub fn resolve(&self) -> Result<MismatchParams> {
        let mut m = MismatchParams::preset(&self.preset, self.seed)
            .ok_or_else(|| Error::Config(format!("unknown mismatch preset {:?}", self.preset)))?;
        if let Some(v) = self.interference_gain {
            m.interference_gain = v;
        }
        if let Some(v) = self.tilt_loss_gain {
            m.tilt_loss_gain = v;
        }
        if let Some(v) = self.torque_bias {
            m.torque_bias = v;
        }
        if let Some(v) = self.thrust_scale {
            m.thrust_scale = v;
        }
        if let Some(v) = self.servo_time_constant {
            m.servo_time_constant = v;
        }
        if let Some(v) = self.noise_std {
            m.noise_std = v;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    /// Training rows kept by k-medoids.
    pub subsample: usize,
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for GpSection {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            subsample: 100,
            restarts: fit.restarts,
            max_iterations: fit.max_iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Episodes per arm (compensation off and on), each with its own noise seed.
    pub repeats: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { repeats: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub vehicle: VehicleSection,
    pub mismatch: MismatchSection,
    pub controller: ControllerGains,
    pub gp: GpSection,
    pub compensator: CompensatorConfig,
    pub train_trajectory: TrajectorySpec,
    pub eval_trajectory: TrajectorySpec,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Defaults for everything except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            vehicle: VehicleSection::default(),
            mismatch: MismatchSection::default(),
            controller: ControllerGains::simulation(),
            gp: GpSection::default(),
            compensator: CompensatorConfig::default(),
            train_trajectory: TrajectorySpec {
                amplitude: 70f64.to_radians(),
                ..TrajectorySpec::figure8()
            }
            .with_excitation(Excitation::default_set()),
            eval_trajectory: TrajectorySpec::figure8(),
            evaluation: EvaluationSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Parse a config from TOML text plus overrides. The seed must be given
    /// by one of them.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        if !user.contains_key("seed") {
            return Err(Error::Config("the configuration must set `seed`".into()));
        }
        let mut merged = toml::Table::try_from(Self::with_seed(0)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: Error| Error::Config(e.to_string());
        self.vehicle_config()?.validate().map_err(bad)?;
        self.controller.validate().map_err(bad)?;
        self.compensator.validate().map_err(bad)?;
        self.train_trajectory.validate().map_err(bad)?;
        self.eval_trajectory.validate().map_err(bad)?;
        if self.gp.subsample < 5 {
            return Err(Error::Config("gp.subsample must be at least 5".into()));
        }
        if self.gp.restarts == 0 {
            return Err(Error::Config("gp.restarts must be at least 1".into()));
        }
        if self.evaluation.repeats == 0 {
            return Err(Error::Config("evaluation.repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn vehicle_config(&self) -> Result<VehicleConfig> {
        Ok(VehicleConfig {
            inertial: self.vehicle.inertial.clone(),
            geometry: self.vehicle.geometry.clone(),
            mismatch: self.mismatch.resolve().map_err(|e| Error::Config(e.to_string()))?,
            measurement_noise_std: self.vehicle.measurement_noise_std,
            gyroscopic: self.vehicle.gyroscopic,
        })
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            restarts: self.gp.restarts,
            seed: self.seed,
            max_iterations: self.gp.max_iterations,
        }
    }

    /// SHA-256 of the resolved vehicle (geometry, inertia, mismatch, noise).
    pub fn config_hash(&self) -> Result<String> {
        let json = serde_json::to_string(&self.vehicle_config()?).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Apply `a.b.c=value` to a table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let spec = spec.trim_start_matches("--");
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key {path:?}")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut node = table;
    for k in parents {
        let entry = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {path:?}: `{k}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
