//! Nominal model-based controller.
//!
//! The desired wrench imposes second-order error dynamics on position and
//! attitude and is converted to a body wrench by inverting the rigid-body
//! model.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid_body::{RigidBody, State, Wrench};

/// Reference trajectory sample. `attitude` maps reference-frame vectors into
/// the inertial frame; rates are expressed in the reference frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub angular_velocity: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
}

impl Reference {
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vector3::zeros(),
            angular_acceleration: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub zeta_p: f64,
    pub omega_n_p: f64,
    /// Per body axis (roll, pitch, yaw).
    pub zeta_a: [f64; 3],
    pub omega_n_a: [f64; 3],
    pub k_i_att: f64,
    /// Clamp on each component of the integral torque, N·m.
    pub integral_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            zeta_p: 0.707,
            omega_n_p: 3.5,
            zeta_a: [1.3, 1.3, 0.74],
            omega_n_a: [3.5, 3.5, 3.5],
            k_i_att: 0.3,
            integral_limit: 1.0,
        }
    }
}

impl ControllerGains {
    /// Flight gains with the attitude integrator disabled, as used in
    /// simulation.
    pub fn simulation() -> Self {
        Self {
            k_i_att: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.zeta_p, self.omega_n_p, self.k_i_att, self.integral_limit]
            .into_iter()
            .chain(self.zeta_a)
            .chain(self.omega_n_a);
        for g in all {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "controller gains must be finite and non-negative, got {g}"
                )));
            }
        }
        if self.omega_n_p <= 0.0 || self.omega_n_a.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter(
                "natural frequencies must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Accumulated attitude integral torque, N·m.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegralState {
    pub torque: Vector3<f64>,
}

/// Extract the vector of a skew-symmetric matrix.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Attitude error `½ (R_DB − R_BD)^∨`, where `r_db` maps body-frame vectors
/// into the reference frame.
pub fn attitude_error(r_db: &Matrix3<f64>) -> Vector3<f64> {
    vee(&((r_db - r_db.transpose()) * 0.5))
}

/// Attitude and angular-velocity errors of `state` against `reference`,
/// both in the body frame.
pub fn tracking_errors(state: &State, reference: &Reference) -> (Vector3<f64>, Vector3<f64>) {
    let r_db = (reference.attitude.inverse() * state.attitude)
        .to_rotation_matrix()
        .into_inner();
    let e_r = attitude_error(&r_db);
    let omega_ref = r_db.transpose() * reference.angular_velocity;
    (e_r, state.angular_velocity - omega_ref)
}

/// Desired body wrench for the current state and reference. The integral
/// state is advanced by `dt` and clamped.
pub fn desired_wrench(
    state: &State,
    reference: &Reference,
    gains: &ControllerGains,
    body: &RigidBody,
    dt: f64,
    integral: &mut IntegralState,
) -> Wrench {
    let m = body.mass();

    let e_p = state.position - reference.position;
    let e_v = state.velocity - reference.velocity;
    let wp = gains.omega_n_p;
    let accel_cmd = reference.acceleration - 2.0 * gains.zeta_p * wp * e_v - wp * wp * e_p;
    let force_inertial = m * (accel_cmd - body.gravity_vector());
    let force = state.attitude.inverse_transform_vector(&force_inertial);

    let r_bd = (state.attitude.inverse() * reference.attitude).to_rotation_matrix();
    let omega = state.angular_velocity;
    let omega_ref = r_bd * reference.angular_velocity;
    let (e_r, e_w) = tracking_errors(state, reference);
    let e_w_dot = Vector3::from_fn(|i, _| {
        let (z, w) = (gains.zeta_a[i], gains.omega_n_a[i]);
        -2.0 * z * w * e_w[i] - w * w * e_r[i]
    });
    let omega_dot = e_w_dot - omega.cross(&omega_ref) + r_bd * reference.angular_acceleration;
    let mut torque = body.inertia() * omega_dot + body.gyroscopic_torque(&omega);

    if gains.k_i_att > 0.0 {
        let limit = gains.integral_limit;
        integral.torque = (integral.torque + gains.k_i_att * e_r * dt).map(|x| x.clamp(-limit, limit));
    }
    torque -= integral.torque;

    Wrench::body(force, torque)
}
