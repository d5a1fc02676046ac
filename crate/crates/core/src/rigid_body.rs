//! Six degree-of-freedom rigid-body plant.
//!
//! Position and velocity live in the inertial frame `E` (z up), attitude is
//! the unit quaternion rotating body-frame vectors into `E`, and angular
//! velocity is expressed in the body frame `B`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Largest accepted integration step.
pub const MAX_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Body,
    Inertial,
}

/// Stacked force and torque with an explicit frame tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: Frame,
}

impl Wrench {
    pub fn body(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self {
            force,
            torque,
            frame: Frame::Body,
        }
    }

    pub fn zero_body() -> Self {
        Self::body(Vector3::zeros(), Vector3::zeros())
    }

    /// Interpret a `[F, M]` 6-vector as a body-frame wrench.
    pub fn from_body_vector(w: &Vector6<f64>) -> Self {
        Self::body(w.fixed_rows::<3>(0).into(), w.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut w = Vector6::zeros();
        w.fixed_rows_mut::<3>(0).copy_from(&self.force);
        w.fixed_rows_mut::<3>(3).copy_from(&self.torque);
        w
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|x| x.is_finite())
    }

    pub(crate) fn expect_frame(&self, expected: Frame) -> Result<()> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected,
                found: self.frame,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl Default for State {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vector3::zeros(),
        }
    }
}

impl State {
    pub fn is_finite(&self) -> bool {
        let q = self.attitude.as_ref().coords;
        self.position
            .iter()
            .chain(self.velocity.iter())
            .chain(q.iter())
            .chain(self.angular_velocity.iter())
            .all(|x| x.is_finite())
    }
}

/// Time derivative of [`State`]. The attitude rate is the raw quaternion
/// `q̇ = ½ q ⊗ (0, ω)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude_rate: Quaternion<f64>,
    pub angular_acceleration: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct InertialParams {
    pub mass: f64,
    /// Row-major body-frame inertia tensor.
    pub inertia: [[f64; 3]; 3],
}

impl Default for InertialParams {
    fn default() -> Self {
        Self::point_mass_ring(4.0, 0.4)
    }
}

impl InertialParams {
    /// Inertia of `mass` split evenly over six point masses on a horizontal
    /// ring of the given radius: `I_xx = I_yy = m r² / 2`, `I_zz = m r²`.
    pub fn point_mass_ring(mass: f64, radius: f64) -> Self {
        let r2 = radius * radius;
        Self {
            mass,
            inertia: [
                [0.5 * mass * r2, 0.0, 0.0],
                [0.0, 0.5 * mass * r2, 0.0],
                [0.0, 0.0, mass * r2],
            ],
        }
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        let i = self.inertia_matrix();
        if i.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("inertia"));
        }
        if (i - i.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("inertia is not symmetric".into()));
        }
        if i.cholesky().is_none() {
            return Err(Error::InvalidParameter(
                "inertia is not positive-definite".into(),
            ));
        }
        Ok(())
    }
}

/// Rigid-body equations of motion with cached inertia inverse.
#[derive(Clone, Debug)]
pub struct RigidBody {
    params: InertialParams,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    gravity: f64,
    gyroscopic: bool,
}

impl RigidBody {
    pub fn new(params: InertialParams, gravity: f64) -> Result<Self> {
        params.validate()?;
        if !gravity.is_finite() {
            return Err(Error::NonFinite("gravity"));
        }
        let inertia = params.inertia_matrix();
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular inertia".into()))?;
        Ok(Self {
            params,
            inertia,
            inertia_inv,
            gravity,
            gyroscopic: true,
        })
    }

    /// Toggle the `ω × I ω` term. Disabling it gives the purely linear
    /// `ω̇ = I⁻¹ M` rotational model.
    pub fn with_gyroscopic(mut self, enabled: bool) -> Self {
        self.gyroscopic = enabled;
        self
    }

    pub fn params(&self) -> &InertialParams {
        &self.params
    }

    pub fn mass(&self) -> f64 {
        self.params.mass
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn gyroscopic(&self) -> bool {
        self.gyroscopic
    }

    /// Gravity as an inertial-frame acceleration.
    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity)
    }

    /// Gyroscopic torque `ω × I ω`, or zero when disabled.
    pub fn gyroscopic_torque(&self, omega: &Vector3<f64>) -> Vector3<f64> {
        if self.gyroscopic {
            omega.cross(&(self.inertia * omega))
        } else {
            Vector3::zeros()
        }
    }

    pub fn derivative(&self, state: &State, wrench: &Wrench) -> Result<StateDerivative> {
        wrench.expect_frame(Frame::Body)?;
        if !state.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        if !wrench.is_finite() {
            return Err(Error::NonFinite("wrench"));
        }
        Ok(self.derivative_unchecked(state, wrench))
    }

    fn derivative_unchecked(&self, state: &State, wrench: &Wrench) -> StateDerivative {
        let omega = state.angular_velocity;
        let acceleration =
            state.attitude * wrench.force / self.params.mass + self.gravity_vector();
        let angular_acceleration =
            self.inertia_inv * (wrench.torque - self.gyroscopic_torque(&omega));
        let omega_q = Quaternion::from_imag(omega);
        let attitude_rate = state.attitude.quaternion() * omega_q * 0.5;
        StateDerivative {
            velocity: state.velocity,
            acceleration,
            attitude_rate,
            angular_acceleration,
        }
    }

    /// One classical Runge-Kutta step under a body wrench held constant
    /// over `dt`. The quaternion is renormalized afterwards.
    pub fn step(&self, state: &State, wrench: &Wrench, dt: f64) -> Result<State> {
        if !(dt > 0.0 && dt <= MAX_STEP) {
            return Err(Error::InvalidParameter(format!(
                "integration step must lie in (0, {MAX_STEP}], got {dt}"
            )));
        }
        wrench.expect_frame(Frame::Body)?;
        if !state.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        if !wrench.is_finite() {
            return Err(Error::NonFinite("wrench"));
        }

        let k1 = self.derivative_unchecked(state, wrench);
        let k2 = self.derivative_unchecked(&advance(state, &k1, 0.5 * dt), wrench);
        let k3 = self.derivative_unchecked(&advance(state, &k2, 0.5 * dt), wrench);
        let k4 = self.derivative_unchecked(&advance(state, &k3, dt), wrench);

        let w = dt / 6.0;
        let q = state.attitude.quaternion()
            + (k1.attitude_rate + k2.attitude_rate * 2.0 + k3.attitude_rate * 2.0 + k4.attitude_rate)
                * w;
        Ok(State {
            position: state.position
                + (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * w,
            velocity: state.velocity
                + (k1.acceleration + 2.0 * k2.acceleration + 2.0 * k3.acceleration + k4.acceleration)
                    * w,
            attitude: UnitQuaternion::from_quaternion(q),
            angular_velocity: state.angular_velocity
                + (k1.angular_acceleration
                    + 2.0 * k2.angular_acceleration
                    + 2.0 * k3.angular_acceleration
                    + k4.angular_acceleration)
                    * w,
        })
    }

    pub fn kinetic_energy(&self, state: &State) -> f64 {
        let w = state.angular_velocity;
        0.5 * self.params.mass * state.velocity.norm_squared() + 0.5 * w.dot(&(self.inertia * w))
    }

    /// Angular momentum about the center of mass, in the inertial frame.
    pub fn angular_momentum(&self, state: &State) -> Vector3<f64> {
        state.attitude * (self.inertia * state.angular_velocity)
    }
}

// Intermediate RK stage. The quaternion is used unnormalized, matching the
// plain vector-space Runge-Kutta scheme; only the final result is projected.
fn advance(state: &State, d: &StateDerivative, h: f64) -> State {
    State {
        position: state.position + d.velocity * h,
        velocity: state.velocity + d.acceleration * h,
        attitude: UnitQuaternion::new_unchecked(state.attitude.quaternion() + d.attitude_rate * h),
        angular_velocity: state.angular_velocity + d.angular_acceleration * h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn body() -> RigidBody {
        RigidBody::new(InertialParams::default(), GRAVITY).unwrap()
    }

    fn max_state_diff(a: &State, b: &State) -> f64 {
        let dq = (a.attitude.quaternion() - b.attitude.quaternion()).coords.amax();
        (a.position - b.position)
            .amax()
            .max((a.velocity - b.velocity).amax())
            .max(dq)
            .max((a.angular_velocity - b.angular_velocity).amax())
    }

    #[test]
    fn default_params_follow_ring_model() {
        let p = InertialParams::default();
        assert_eq!(p.mass, 4.0);
        assert!((p.inertia[0][0] - 0.32).abs() < 1e-15);
        assert!((p.inertia[1][1] - 0.32).abs() < 1e-15);
        assert!((p.inertia[2][2] - 0.64).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn hover_is_equilibrium() {
        let rb = body();
        let w = Wrench::body(Vector3::new(0.0, 0.0, 4.0 * GRAVITY), Vector3::zeros());
        let d = rb.derivative(&State::default(), &w).unwrap();
        assert!(d.acceleration.amax() < 1e-15);
        assert!(d.angular_acceleration.amax() < 1e-15);

        let mut s = State::default();
        for _ in 0..100 {
            s = rb.step(&s, &w, 1e-3).unwrap();
        }
        assert!(max_state_diff(&s, &State::default()) < 1e-12);
    }

    #[test]
    fn free_fall() {
        let d = body()
            .derivative(&State::default(), &Wrench::zero_body())
            .unwrap();
        assert_eq!(d.acceleration, Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn angular_acceleration_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Non-diagonal inertia to exercise the full solve.
        let params = InertialParams {
            mass: 3.0,
            inertia: [[0.4, 0.02, -0.01], [0.02, 0.35, 0.03], [-0.01, 0.03, 0.7]],
        };
        let rb = RigidBody::new(params.clone(), GRAVITY).unwrap();
        for _ in 0..50 {
            let mut v = || Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let s = State {
                position: v(),
                velocity: v(),
                attitude: UnitQuaternion::from_scaled_axis(v()),
                angular_velocity: v(),
            };
            let w = Wrench::body(v(), v());
            let d = rb.derivative(&s, &w).unwrap();

            let i = Matrix3::from_fn(|r, c| params.inertia[r][c]);
            let rhs = w.torque - s.angular_velocity.cross(&(i * s.angular_velocity));
            let expected = gauss_solve(i, rhs);
            assert!((d.angular_acceleration - expected).amax() < 1e-12);
        }
    }

    // Gaussian elimination with partial pivoting, independent of nalgebra's
    // inverse.
    fn gauss_solve(a: Matrix3<f64>, b: Vector3<f64>) -> Vector3<f64> {
        let mut m = [[0.0; 4]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = a[(r, c)];
            }
            m[r][3] = b[r];
        }
        for col in 0..3 {
            let piv = (col..3)
                .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for r in col + 1..3 {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
        let mut x = [0.0; 3];
        for r in (0..3).rev() {
            let mut acc = m[r][3];
            for c in r + 1..3 {
                acc -= m[r][c] * x[c];
            }
            x[r] = acc / m[r][r];
        }
        Vector3::from(x)
    }

    #[test]
    fn single_axis_spin_up() {
        let rb = body();
        let w = Wrench::body(Vector3::new(0.0, 0.0, 4.0 * GRAVITY), Vector3::new(0.0, 0.0, 0.1));
        let mut s = State::default();
        for _ in 0..1000 {
            s = rb.step(&s, &w, 1e-3).unwrap();
        }
        assert!((s.angular_velocity.z - 0.1 / 0.64).abs() < 1e-6);
    }

    #[test]
    fn halving_step_converges() {
        let rb = body();
        let w = Wrench::body(Vector3::new(1.0, -2.0, 42.0), Vector3::new(0.05, -0.03, 0.1));
        let s0 = State {
            angular_velocity: Vector3::new(0.3, -0.2, 0.5),
            velocity: Vector3::new(0.5, 0.0, -0.2),
            ..State::default()
        };
        let run = |dt: f64, n: usize| {
            let mut s = s0;
            for _ in 0..n {
                s = rb.step(&s, &w, dt).unwrap();
            }
            s
        };
        let coarse = run(1e-3, 1000);
        let fine = run(5e-4, 2000);
        assert!(max_state_diff(&coarse, &fine) < 1e-8);
    }

    #[test]
    fn torque_free_motion_conserves_energy_and_momentum() {
        let rb = RigidBody::new(
            InertialParams {
                mass: 4.0,
                inertia: [[0.32, 0.0, 0.0], [0.0, 0.45, 0.0], [0.0, 0.0, 0.64]],
            },
            0.0,
        )
        .unwrap();
        let mut s = State {
            velocity: Vector3::new(0.3, 0.1, -0.2),
            angular_velocity: Vector3::new(1.0, 0.5, -0.8),
            ..State::default()
        };
        let e0 = rb.kinetic_energy(&s);
        let h0 = rb.angular_momentum(&s);
        for _ in 0..10_000 {
            s = rb.step(&s, &Wrench::zero_body(), 1e-3).unwrap();
        }
        assert!((rb.kinetic_energy(&s) - e0).abs() < 1e-7);
        assert!((rb.angular_momentum(&s) - h0).amax() < 1e-7);
        assert!((s.attitude.quaternion().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_is_bitwise_deterministic() {
        let rb = body();
        let w = Wrench::body(Vector3::new(0.1, 0.2, 40.0), Vector3::new(0.01, 0.02, -0.03));
        let s = State {
            angular_velocity: Vector3::new(0.2, 0.1, 0.0),
            ..State::default()
        };
        let a = rb.step(&s, &w, 1e-3).unwrap();
        let b = rb.step(&s, &w, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rb = body();
        let s = State::default();
        assert!(rb.step(&s, &Wrench::zero_body(), 0.0).is_err());
        assert!(rb.step(&s, &Wrench::zero_body(), 0.02).is_err());
        let bad = Wrench::body(Vector3::new(f64::NAN, 0.0, 0.0), Vector3::zeros());
        assert!(matches!(rb.derivative(&s, &bad), Err(Error::NonFinite(_))));
        let inertial = Wrench {
            frame: Frame::Inertial,
            ..Wrench::zero_body()
        };
        assert!(matches!(
            rb.derivative(&s, &inertial),
            Err(Error::FrameMismatch { .. })
        ));
        let params = InertialParams {
            mass: -1.0,
            ..InertialParams::default()
        };
        assert!(RigidBody::new(params, GRAVITY).is_err());
    }

    #[test]
    fn literal_model_drops_gyroscopic_term() {
        let rb = body().with_gyroscopic(false);
        let s = State {
            angular_velocity: Vector3::new(1.0, 2.0, 0.5),
            ..State::default()
        };
        let d = rb.derivative(&s, &Wrench::zero_body()).unwrap();
        assert_eq!(d.angular_acceleration, Vector3::zeros());
    }
}
