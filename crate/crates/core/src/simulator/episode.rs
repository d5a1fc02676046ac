use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::reference::{generate_reference, TrajectorySpec};
use crate::actuation::{true_plant, ActuatorCommand, Allocator, MismatchParams, ServoState, VehicleGeometry, ARMS};
use crate::compensator::{Compensator, CompensatorConfig};
use crate::controller::{desired_wrench, tracking_errors, ControllerGains, IntegralState, Reference};
use crate::error::{Error, Result};
use crate::gp::{GpModel, Provenance, TrainingSet, TORQUE_AXES};
use crate::rigid_body::{InertialParams, RigidBody, State, Wrench, GRAVITY};

/// Control tick, s (100 Hz).
pub const CONTROL_PERIOD: f64 = 0.01;
/// Plant integration steps per control tick (1 kHz).
pub const PLANT_SUBSTEPS: usize = 10;
/// Body rate beyond which an episode counts as diverged, rad/s.
pub const DIVERGENCE_RATE: f64 = 50.0;

/// Everything about the simulated vehicle that a model depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleConfig {
    pub inertial: InertialParams,
    pub geometry: VehicleGeometry,
    pub mismatch: MismatchParams,
    /// Std of the additive noise on measured torque, N·m.
    pub measurement_noise_std: f64,
    pub gyroscopic: bool,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            inertial: InertialParams::default(),
            geometry: VehicleGeometry::default(),
            mismatch: MismatchParams::voliro_like(0),
            measurement_noise_std: 0.02,
            gyroscopic: true,
        }
    }
}

impl VehicleConfig {
    /// No mismatch and noiseless measurements.
    pub fn ideal() -> Self {
        Self {
            mismatch: MismatchParams::ideal(),
            measurement_noise_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.inertial.validate()?;
        self.geometry.validate()?;
        self.mismatch.validate()?;
        if !(self.measurement_noise_std >= 0.0 && self.measurement_noise_std.is_finite()) {
            return Err(Error::InvalidParameter("measurement_noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Learned compensation to run in the loop.
#[derive(Clone, Copy, Debug)]
pub struct Compensation<'a> {
    pub model: &'a GpModel,
    pub config: &'a CompensatorConfig,
}

/// One control tick. Wrenches are body-frame `[F, M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub state: State,
    pub reference: Reference,
    pub w_des: Vector6<f64>,
    pub delta: Vector6<f64>,
    pub w_cmd: Vector6<f64>,
    pub command: ActuatorCommand,
    pub saturated: bool,
    /// Wrench the plant actually produced over the tick.
    pub realized: Vector6<f64>,
    /// Realized torque plus measurement noise.
    pub measured_torque: Vector3<f64>,
    pub e_p: Vector3<f64>,
    pub e_r: Vector3<f64>,
    pub beta: f64,
    pub sigma: f64,
    pub cost: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub spec: TrajectorySpec,
    pub seed: u64,
    pub compensated: bool,
    /// The episode was cut short by divergence.
    pub unstable: bool,
    pub config_hash: String,
    pub rows: Vec<TickRecord>,
}

impl EpisodeLog {
    /// Per-axis RMS of the attitude error, rad.
    pub fn rms_attitude_error(&self) -> Vector3<f64> {
        if self.rows.is_empty() {
            return Vector3::zeros();
        }
        let sum = self.rows.iter().fold(Vector3::zeros(), |acc, r| acc + r.e_r.component_mul(&r.e_r));
        (sum / self.rows.len() as f64).map(f64::sqrt)
    }

    pub fn max_attitude_error(&self) -> Vector3<f64> {
        self.rows
            .iter()
            .fold(Vector3::zeros(), |acc: Vector3<f64>, r| acc.sup(&r.e_r.abs()))
    }

    pub fn end_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.time)
    }
}

fn diverged(state: &State) -> bool {
    !state.is_finite() || state.angular_velocity.norm() > DIVERGENCE_RATE
}

/// Simulate one episode. The vehicle starts on the reference at t = 0.
/// All randomness (plant and measurement noise) comes from `seed`.
pub fn run_episode(
    spec: &TrajectorySpec,
    vehicle: &VehicleConfig,
    gains: &ControllerGains,
    compensation: Option<Compensation<'_>>,
    seed: u64,
) -> Result<EpisodeLog> {
    spec.validate()?;
    vehicle.validate()?;
    gains.validate()?;
    let body = RigidBody::new(vehicle.inertial.clone(), GRAVITY)?.with_gyroscopic(vehicle.gyroscopic);
    let allocator = Allocator::new(vehicle.geometry.clone())?;
    let mut compensator = match compensation {
        Some(c) => {
            if !c.model.is_trained() {
                return Err(Error::Unfitted);
            }
            Some(Compensator::new(c.model, c.config.clone())?)
        }
        None => None,
    };
    let measurement = (vehicle.measurement_noise_std > 0.0)
        .then(|| Normal::new(0.0, vehicle.measurement_noise_std).expect("validated std"));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut servo = ServoState::default();
    let mut integral = IntegralState::default();
    let mut tilt = [0.0; ARMS];

    let start = generate_reference(spec, 0.0);
    let mut state = State {
        position: start.position,
        velocity: start.velocity,
        attitude: start.attitude,
        angular_velocity: start.angular_velocity,
    };

    let ticks = (spec.duration / CONTROL_PERIOD).round() as usize;
    let h = CONTROL_PERIOD / PLANT_SUBSTEPS as f64;
    let mut rows = Vec::with_capacity(ticks);
    let mut unstable = false;

    for k in 0..ticks {
        let time = k as f64 * CONTROL_PERIOD;
        let reference = generate_reference(spec, time);
        let w_des = desired_wrench(&state, &reference, gains, &body, CONTROL_PERIOD, &mut integral);

        let (delta, beta, sigma, cost, iterations) = match compensator.as_mut() {
            Some(comp) => match comp.step(&w_des) {
                Ok(t) => (t.delta, t.beta, t.sigma, t.cost, t.iterations),
                Err(e) => {
                    log::warn!("compensator failed at t = {time:.2}: {e}");
                    unstable = true;
                    break;
                }
            },
            None => (Vector6::zeros(), 0.0, 0.0, 0.0, 0),
        };
        let w_cmd = w_des.to_vector() + delta;
        let allocation = match allocator.allocate(&Wrench::from_body_vector(&w_cmd), &tilt) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("allocation failed at t = {time:.2}: {e}");
                unstable = true;
                break;
            }
        };
        tilt = allocation.command.tilt;

        let realized = true_plant(&allocation.command, &vehicle.geometry, &vehicle.mismatch, &mut servo, CONTROL_PERIOD, &mut rng);
        let mut measured_torque = realized.torque;
        if let Some(noise) = &measurement {
            for j in 0..3 {
                measured_torque[j] += noise.sample(&mut rng);
            }
        }
        let (e_r, _) = tracking_errors(&state, &reference);
        rows.push(TickRecord {
            time,
            state,
            reference,
            w_des: w_des.to_vector(),
            delta,
            w_cmd,
            command: allocation.command,
            saturated: allocation.saturated,
            realized: realized.to_vector(),
            measured_torque,
            e_p: state.position - reference.position,
            e_r,
            beta,
            sigma,
            cost,
            iterations,
        });

        for _ in 0..PLANT_SUBSTEPS {
            state = match body.step(&state, &realized, h) {
                Ok(s) => s,
                Err(_) => {
                    unstable = true;
                    break;
                }
            };
        }
        if unstable || diverged(&state) {
            log::warn!("episode diverged at t = {:.3} s", time + CONTROL_PERIOD);
            unstable = true;
            break;
        }
    }

    Ok(EpisodeLog {
        spec: spec.clone(),
        seed,
        compensated: compensator.is_some(),
        unstable,
        config_hash: String::new(),
        rows,
    })
}

/// Regression pairs of a log: input the commanded wrench, target the
/// measured minus commanded torque on each torque axis.
pub fn training_pairs(log: &EpisodeLog) -> TrainingSet {
    TrainingSet {
        axes: TORQUE_AXES.to_vec(),
        inputs: log.rows.iter().map(|r| r.w_cmd.into()).collect(),
        targets: log
            .rows
            .iter()
            .map(|r| (0..3).map(|j| r.measured_torque[j] - r.w_cmd[3 + j]).collect())
            .collect(),
        provenance: Provenance {
            episode: log.spec.kind.name().to_string(),
            seed: log.seed,
            config_hash: log.config_hash.clone(),
            timestamps: log.rows.iter().map(|r| r.time).collect(),
        },
    }
}

/// Fly `spec` with the nominal controller and return every tick as a
/// training pair.
pub fn collect_training_data(spec: &TrajectorySpec, vehicle: &VehicleConfig, gains: &ControllerGains, seed: u64) -> Result<TrainingSet> {
    let log = run_episode(spec, vehicle, gains, None, seed)?;
    if log.unstable {
        return Err(Error::Unstable { time: log.end_time() + CONTROL_PERIOD });
    }
    Ok(training_pairs(&log))
}
