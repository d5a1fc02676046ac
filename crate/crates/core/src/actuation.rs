//! Actuation model of a six-arm tilt-rotor hexacopter with coaxial rotor
//! pairs.
//!
//! Arm `i` sits at azimuth `ψᵢ = i·60°` and carries two counter-rotating
//! propellers (`2i`, `2i+1`). Tilting the arm by `αᵢ` rotates the pair thrust
//! `Tᵢ` from the body z axis towards the horizontal tangent
//! `t̂ᵢ = (−sin ψᵢ, cos ψᵢ, 0)`, so every arm contributes a vertical component
//! `Tᵢ cos αᵢ` and a lateral component `Tᵢ sin αᵢ`. The wrench is linear in
//! those twelve components, which is what the allocation inverts.

use nalgebra::{DMatrix, SMatrix, SVector, Vector3, Vector6};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid_body::{Frame, Wrench};

pub const ARMS: usize = 6;
pub const ROTORS: usize = 12;

/// Pair thrust below which an arm is considered idle and keeps its tilt.
const IDLE_THRUST: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    /// Per-propeller thrust in N; rotors `2i` and `2i+1` share arm `i`.
    pub thrusts: [f64; ROTORS],
    /// Per-arm tilt angle in rad.
    pub tilt: [f64; ARMS],
}

impl ActuatorCommand {
    pub fn zero() -> Self {
        Self {
            thrusts: [0.0; ROTORS],
            tilt: [0.0; ARMS],
        }
    }

    pub fn pair_thrust(&self, arm: usize) -> f64 {
        self.thrusts[2 * arm] + self.thrusts[2 * arm + 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct VehicleGeometry {
    pub arm_length: f64,
    pub arm_azimuths: [f64; ARMS],
    pub thrust_max: f64,
    /// Drag torque per unit thrust, in m. Even rotors spin positive.
    pub drag_coefficient: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self::hexagonal(0.4, 8.0, 0.016)
    }
}

impl VehicleGeometry {
    pub fn hexagonal(arm_length: f64, thrust_max: f64, drag_coefficient: f64) -> Self {
        Self {
            arm_length,
            arm_azimuths: std::array::from_fn(|i| i as f64 * std::f64::consts::FRAC_PI_3),
            thrust_max,
            drag_coefficient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arm_length > 0.0 && self.arm_length.is_finite()) {
            return Err(Error::InvalidParameter("arm length must be positive".into()));
        }
        if !(self.thrust_max > 0.0 && self.thrust_max.is_finite()) {
            return Err(Error::InvalidParameter("thrust_max must be positive".into()));
        }
        if !self.drag_coefficient.is_finite() {
            return Err(Error::NonFinite("drag_coefficient"));
        }
        for (i, psi) in self.arm_azimuths.iter().enumerate() {
            let expected = i as f64 * std::f64::consts::FRAC_PI_3;
            if (psi - expected).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "arm {i} azimuth {psi} is not hexagonal"
                )));
            }
        }
        Ok(())
    }

    pub fn arm_position(&self, arm: usize) -> Vector3<f64> {
        let psi = self.arm_azimuths[arm];
        Vector3::new(psi.cos(), psi.sin(), 0.0) * self.arm_length
    }

    pub fn arm_tangent(&self, arm: usize) -> Vector3<f64> {
        let psi = self.arm_azimuths[arm];
        Vector3::new(-psi.sin(), psi.cos(), 0.0)
    }

    /// Unit thrust direction of arm `arm` at tilt `alpha`.
    pub fn thrust_direction(&self, arm: usize, alpha: f64) -> Vector3<f64> {
        self.arm_tangent(arm) * alpha.sin() + Vector3::z() * alpha.cos()
    }

    /// Spin sign of a rotor: +1 for even indices, −1 for odd.
    pub fn spin(rotor: usize) -> f64 {
        if rotor.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

/// Idealized actuation map from actuator commands to the body wrench.
pub fn forward_model(u: &ActuatorCommand, geom: &VehicleGeometry) -> Wrench {
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for arm in 0..ARMS {
        let dir = geom.thrust_direction(arm, u.tilt[arm]);
        let thrust = dir * u.pair_thrust(arm);
        let drag = geom.drag_coefficient * (u.thrusts[2 * arm] - u.thrusts[2 * arm + 1]);
        force += thrust;
        torque += geom.arm_position(arm).cross(&thrust) + dir * drag;
    }
    Wrench::body(force, torque)
}

/// Result of allocating a wrench command to the actuators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub command: ActuatorCommand,
    /// Set when any propeller thrust had to be clamped.
    pub saturated: bool,
}

/// Minimum-norm allocation through the pseudo-inverse of the linear map from
/// per-arm (vertical, lateral) force components to the body wrench.
#[derive(Clone, Debug)]
pub struct Allocator {
    geometry: VehicleGeometry,
    pinv: SMatrix<f64, 12, 6>,
}

impl Allocator {
    pub fn new(geometry: VehicleGeometry) -> Result<Self> {
        geometry.validate()?;
        let a = Self::component_map(&geometry);
        let pinv = DMatrix::from_column_slice(6, 12, a.as_slice())
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidParameter(format!("allocation map: {e}")))?;
        Ok(Self {
            geometry,
            pinv: SMatrix::from_column_slice(pinv.as_slice()),
        })
    }

    pub fn geometry(&self) -> &VehicleGeometry {
        &self.geometry
    }

    /// `A` with `W = A x`, where `x[2i] = Tᵢ cos αᵢ` and `x[2i+1] = Tᵢ sin αᵢ`.
    /// Coaxial drag cancels for an even split and does not appear.
    pub fn component_map(geom: &VehicleGeometry) -> SMatrix<f64, 6, 12> {
        let mut a = SMatrix::<f64, 6, 12>::zeros();
        for arm in 0..ARMS {
            let r = geom.arm_position(arm);
            let z = Vector3::z();
            let t = geom.arm_tangent(arm);
            let mut col_v = Vector6::zeros();
            col_v.fixed_rows_mut::<3>(0).copy_from(&z);
            col_v.fixed_rows_mut::<3>(3).copy_from(&r.cross(&z));
            let mut col_l = Vector6::zeros();
            col_l.fixed_rows_mut::<3>(0).copy_from(&t);
            col_l.fixed_rows_mut::<3>(3).copy_from(&r.cross(&t));
            a.set_column(2 * arm, &col_v);
            a.set_column(2 * arm + 1, &col_l);
        }
        a
    }

    /// Allocate a body wrench. Arms with zero thrust keep `previous_tilt`.
    pub fn allocate(&self, w_cmd: &Wrench, previous_tilt: &[f64; ARMS]) -> Result<Allocation> {
        w_cmd.expect_frame(Frame::Body)?;
        if !w_cmd.is_finite() {
            return Err(Error::NonFinite("wrench command"));
        }
        let x: SVector<f64, 12> = self.pinv * w_cmd.to_vector();
        let mut command = ActuatorCommand::zero();
        let mut saturated = false;
        let f_max = self.geometry.thrust_max;
        for arm in 0..ARMS {
            let (vertical, lateral) = (x[2 * arm], x[2 * arm + 1]);
            let pair = vertical.hypot(lateral);
            command.tilt[arm] = if pair > IDLE_THRUST {
                lateral.atan2(vertical)
            } else {
                previous_tilt[arm]
            };
            let each = 0.5 * pair;
            let clamped = each.clamp(0.0, f_max);
            saturated |= clamped != each;
            command.thrusts[2 * arm] = clamped;
            command.thrusts[2 * arm + 1] = clamped;
        }
        Ok(Allocation { command, saturated })
    }
}

/// Parameters of the synthetic true actuation error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchParams {
    /// Thrust loss from flow interference of the two neighbouring arms.
    pub interference_gain: f64,
    /// Thrust loss growing with `sin² α` of the arm's own tilt.
    pub tilt_loss_gain: f64,
    /// Constant body torque offset, N·m.
    pub torque_bias: [f64; 3],
    /// Per-arm thrust scale factor.
    pub thrust_scale: [f64; ARMS],
    /// First-order tilt servo time constant, s. Zero disables the lag.
    pub servo_time_constant: f64,
    /// Standard deviation of additive torque noise, N·m.
    pub noise_std: f64,
}

impl MismatchParams {
    pub fn ideal() -> Self {
        Self {
            interference_gain: 0.0,
            tilt_loss_gain: 0.0,
            torque_bias: [0.0; 3],
            thrust_scale: [1.0; ARMS],
            servo_time_constant: 0.0,
            noise_std: 0.0,
        }
    }

    /// Default synthetic mismatch. Thrust scale errors are drawn uniformly
    /// from `[0.95, 1.05]` with the given seed.
    pub fn voliro_like(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            interference_gain: 0.08,
            tilt_loss_gain: 0.15,
            torque_bias: [0.25, -0.13, 0.45],
            thrust_scale: std::array::from_fn(|_| rng.random_range(0.95..=1.05)),
            servo_time_constant: 0.0,
            noise_std: 0.02,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "ideal" => Some(Self::ideal()),
            "voliro-like" => Some(Self::voliro_like(seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.interference_gain,
            self.tilt_loss_gain,
            self.servo_time_constant,
            self.noise_std,
        ]
        .iter()
        .chain(self.torque_bias.iter())
        .chain(self.thrust_scale.iter())
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("mismatch parameters"));
        }
        if self.servo_time_constant < 0.0 {
            return Err(Error::InvalidParameter("servo time constant must be >= 0".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidParameter("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Multiplicative thrust factor of arm `arm` given the realized tilts.
    pub fn thrust_factor(&self, arm: usize, tilt: &[f64; ARMS]) -> f64 {
        let own = tilt[arm].sin();
        let prev = tilt[(arm + ARMS - 1) % ARMS].sin().abs();
        let next = tilt[(arm + 1) % ARMS].sin().abs();
        self.thrust_scale[arm]
            * (1.0 - self.tilt_loss_gain * own * own)
            * (1.0 - self.interference_gain * 0.5 * (prev + next))
    }
}

/// Realized tilt angles of the lagged servos. Starts at the first command.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ServoState {
    tilt: Option<[f64; ARMS]>,
}

impl ServoState {
    pub fn tilt(&self) -> Option<&[f64; ARMS]> {
        self.tilt.as_ref()
    }

    fn advance(&mut self, commanded: &[f64; ARMS], tau: f64, dt: f64) -> [f64; ARMS] {
        let realized = match (self.tilt, tau > 0.0) {
            (Some(current), true) => {
                let blend = 1.0 - (-dt / tau).exp();
                std::array::from_fn(|i| current[i] + blend * (commanded[i] - current[i]))
            }
            _ => *commanded,
        };
        self.tilt = Some(realized);
        realized
    }
}

/// Wrench actually produced by the vehicle for command `u`. `dt` is the time
/// since the previous call and only matters when the servo lag is enabled.
/// Noise is drawn from `rng` only when `noise_std > 0`.
pub fn true_plant<R: Rng + ?Sized>(
    u: &ActuatorCommand,
    geom: &VehicleGeometry,
    mismatch: &MismatchParams,
    servo: &mut ServoState,
    dt: f64,
    rng: &mut R,
) -> Wrench {
    let tilt = servo.advance(&u.tilt, mismatch.servo_time_constant, dt);
    let mut perturbed = ActuatorCommand {
        thrusts: u.thrusts,
        tilt,
    };
    for arm in 0..ARMS {
        let factor = mismatch.thrust_factor(arm, &tilt);
        perturbed.thrusts[2 * arm] *= factor;
        perturbed.thrusts[2 * arm + 1] *= factor;
    }
    let mut w = forward_model(&perturbed, geom);
    w.torque += Vector3::from(mismatch.torque_bias);
    if mismatch.noise_std > 0.0 {
        let normal = Normal::new(0.0, mismatch.noise_std).expect("validated std");
        for k in 0..3 {
            w.torque[k] += normal.sample(rng);
        }
    }
    w
}
