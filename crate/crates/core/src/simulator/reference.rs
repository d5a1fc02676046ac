//! Reference trajectories.
//!
//! Attitudes are generated as ZYX Euler angles (yaw ψ, pitch θ, roll φ)
//! carried together with their time derivatives, so body rates and angular
//! accelerations are exact rather than finite-differenced.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::Reference;
use crate::error::{Error, Result};

/// Semi-axis of the figure-8 lemniscate, m (4 m tip-to-tip).
pub const FIGURE8_HALF_SPAN: f64 = 2.0;
/// Time for one loop of the figure 8, s.
pub const FIGURE8_PERIOD: f64 = 20.0;
/// Peak |s''| of the quintic smoothstep on unit time.
const SMOOTHSTEP_PEAK_ACCEL: f64 = 5.773_502_691_896_258; // 10/√3

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Pitch 0 → amplitude → 0 at a fixed position.
    PitchSweep,
    /// Lemniscate position path, tilting towards the velocity direction.
    Figure8,
    /// Roll step of `amplitude` at `step_time` from hover.
    Step,
    Hover,
}

impl TrajectoryKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PitchSweep => "pitch_sweep",
            Self::Figure8 => "figure8",
            Self::Step => "step",
            Self::Hover => "hover",
        }
    }
}

/// Sinusoid added to one Euler angle (0 roll, 1 pitch, 2 yaw).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Excitation {
    pub axis: usize,
    /// rad
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
}

impl Excitation {
    /// 0.15 rad at 0.3, 0.5 and 0.7 Hz on roll, pitch and yaw.
    pub fn default_set() -> Vec<Excitation> {
        [0.3, 0.5, 0.7]
            .iter()
            .enumerate()
            .map(|(axis, &frequency)| Excitation { axis, amplitude: 0.15, frequency })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// Peak pitch, peak tilt or roll step, rad. Unused for hover.
    pub amplitude: f64,
    /// s
    pub duration: f64,
    /// Bound on the pitch-sweep angular acceleration, rad/s².
    pub max_angular_accel: f64,
    #[serde(default)]
    pub excitation: Vec<Excitation>,
    /// Time of the step, s.
    #[serde(default = "default_step_time")]
    pub step_time: f64,
}

fn default_step_time() -> f64 {
    1.0
}

impl TrajectorySpec {
    pub fn pitch_sweep() -> Self {
        Self {
            kind: TrajectoryKind::PitchSweep,
            amplitude: 60f64.to_radians(),
            duration: 10.0,
            max_angular_accel: 1.0,
            excitation: Vec::new(),
            step_time: default_step_time(),
        }
    }

    pub fn figure8() -> Self {
        Self {
            kind: TrajectoryKind::Figure8,
            amplitude: 63f64.to_radians(),
            duration: FIGURE8_PERIOD,
            ..Self::pitch_sweep()
        }
    }

    pub fn step() -> Self {
        Self {
            kind: TrajectoryKind::Step,
            amplitude: 40f64.to_radians(),
            duration: 5.0,
            ..Self::pitch_sweep()
        }
    }

    pub fn hover(duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Hover,
            amplitude: 0.0,
            duration,
            ..Self::pitch_sweep()
        }
    }

    pub fn with_excitation(mut self, excitation: Vec<Excitation>) -> Self {
        self.excitation = excitation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.max_angular_accel > 0.0 && self.max_angular_accel.is_finite()) {
            return Err(Error::InvalidParameter("max_angular_accel must be positive".into()));
        }
        if !self.amplitude.is_finite() || !self.step_time.is_finite() {
            return Err(Error::NonFinite("trajectory spec"));
        }
        for e in &self.excitation {
            if e.axis > 2 || !e.amplitude.is_finite() || !(e.frequency >= 0.0 && e.frequency.is_finite()) {
                return Err(Error::InvalidParameter(format!("bad excitation term {e:?}")));
            }
        }
        if self.kind == TrajectoryKind::PitchSweep {
            let ramp = self.ramp_time();
            if 2.0 * ramp > self.duration {
                return Err(Error::InvalidParameter(format!(
                    "pitch sweep of {:.3} rad needs at least {:.3} s under the acceleration bound",
                    self.amplitude,
                    2.0 * ramp
                )));
            }
        }
        Ok(())
    }

    /// Duration of one smoothstep ramp that just meets the acceleration bound.
    pub fn ramp_time(&self) -> f64 {
        (SMOOTHSTEP_PEAK_ACCEL * self.amplitude.abs() / self.max_angular_accel).sqrt()
    }
}

/// A scalar function of time with its first three derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Jet([f64; 4]);

impl Jet {
    fn constant(v: f64) -> Self {
        Jet([v, 0.0, 0.0, 0.0])
    }

    fn time(t: f64) -> Self {
        Jet([t, 1.0, 0.0, 0.0])
    }

    fn value(self) -> f64 {
        self.0[0]
    }

    fn d(self, k: usize) -> f64 {
        self.0[k]
    }

    /// Derivative as a jet. The highest slot is unknown and set to zero.
    fn derivative(self) -> Self {
        Jet([self.0[1], self.0[2], self.0[3], 0.0])
    }

    /// `f ∘ self` given `f, f', f'', f'''` at the current value.
    fn compose(self, f: [f64; 4]) -> Self {
        let [_, g1, g2, g3] = self.0;
        Jet([
            f[0],
            f[1] * g1,
            f[2] * g1 * g1 + f[1] * g2,
            f[3] * g1 * g1 * g1 + 3.0 * f[2] * g1 * g2 + f[1] * g3,
        ])
    }

    fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c])
    }

    fn cos(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s])
    }

    fn recip(self) -> Self {
        let x = self.value();
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet(std::array::from_fn(|k| self.0[k] + o.0[k]))
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet(std::array::from_fn(|k| self.0[k] - o.0[k]))
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet(self.0.map(|v| -v))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (f, g) = (self.0, o.0);
        Jet([
            f[0] * g[0],
            f[1] * g[0] + f[0] * g[1],
            f[2] * g[0] + 2.0 * f[1] * g[1] + f[0] * g[2],
            f[3] * g[0] + 3.0 * f[2] * g[1] + 3.0 * f[1] * g[2] + f[0] * g[3],
        ])
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet(o.0.map(|v| self * v))
    }
}

/// Lemniscate of Bernoulli position `(x, y)` as jets in time.
fn lemniscate(t: f64) -> (Jet, Jet) {
    let s = (TAU / FIGURE8_PERIOD) * Jet::time(t);
    let (sin, cos) = (s.sin(), s.cos());
    let inv = (Jet::constant(1.0) + sin * sin).recip();
    let x = FIGURE8_HALF_SPAN * (cos * inv);
    let y = FIGURE8_HALF_SPAN * (sin * cos * inv);
    (x, y)
}

/// Peak horizontal speed along the lemniscate, m/s.
fn figure8_peak_speed() -> f64 {
    static PEAK: OnceLock<f64> = OnceLock::new();
    *PEAK.get_or_init(|| {
        const SAMPLES: usize = 20_000;
        (0..SAMPLES)
            .map(|i| {
                let (x, y) = lemniscate(FIGURE8_PERIOD * i as f64 / SAMPLES as f64);
                x.d(1).hypot(y.d(1))
            })
            .fold(0.0, f64::max)
    })
}

/// Quintic smoothstep `10τ³ − 15τ⁴ + 6τ⁵` of `t / ramp`, clamped to [0, 1].
fn smoothstep(t: f64, ramp: f64) -> Jet {
    if t <= 0.0 {
        return Jet::constant(0.0);
    }
    if t >= ramp {
        return Jet::constant(1.0);
    }
    let u = t / ramp;
    let (u2, u3) = (u * u, u * u * u);
    Jet([
        u3 * (10.0 - 15.0 * u + 6.0 * u2),
        30.0 * u2 * (1.0 - u) * (1.0 - u) / ramp,
        60.0 * u * (1.0 - 3.0 * u + 2.0 * u2) / (ramp * ramp),
        60.0 * (1.0 - 6.0 * u + 6.0 * u2) / (ramp * ramp * ramp),
    ])
}

/// Pitch profile: hold, ramp up, hold, ramp down, hold, with equal holds.
fn pitch_sweep(spec: &TrajectorySpec, t: f64) -> Jet {
    let ramp = spec.ramp_time();
    let pad = (spec.duration - 2.0 * ramp) / 3.0;
    let up = smoothstep(t - pad, ramp);
    let down = smoothstep(t - (2.0 * pad + ramp), ramp);
    spec.amplitude * (up - down)
}

/// Reference at time `t`. Times outside `[0, duration]` are clamped.
pub fn generate_reference(spec: &TrajectorySpec, t: f64) -> Reference {
    let t = if (0.0..=spec.duration).contains(&t) {
        t
    } else {
        log::warn!("reference time {t} outside [0, {}]; clamping", spec.duration);
        t.clamp(0.0, spec.duration)
    };

    let zero = Jet::constant(0.0);
    let (mut roll, mut pitch, mut yaw) = (zero, zero, zero);
    let mut position = [zero, zero, zero];
    match spec.kind {
        TrajectoryKind::Hover => {}
        TrajectoryKind::PitchSweep => pitch = pitch_sweep(spec, t),
        TrajectoryKind::Step => {
            if t >= spec.step_time {
                roll = Jet::constant(spec.amplitude);
            }
        }
        TrajectoryKind::Figure8 => {
            let (x, y) = lemniscate(t);
            // Tilt vector proportional to horizontal velocity: pitch tips
            // body z towards +x, negative roll towards +y.
            let gain = spec.amplitude / figure8_peak_speed();
            pitch = gain * x.derivative();
            roll = -(gain * y.derivative());
            position = [x, y, zero];
        }
    }
    for e in &spec.excitation {
        let w = TAU * e.frequency;
        let term = e.amplitude * (w * Jet::time(t)).sin();
        match e.axis {
            0 => roll = roll + term,
            1 => pitch = pitch + term,
            _ => yaw = yaw + term,
        }
    }

    // Body rates of ZYX Euler angles and their derivatives.
    let (sr, cr) = (roll.sin(), roll.cos());
    let (sp, cp) = (pitch.sin(), pitch.cos());
    let (dr, dp, dy) = (roll.derivative(), pitch.derivative(), yaw.derivative());
    let wx = dr - dy * sp;
    let wy = dp * cr + dy * sr * cp;
    let wz = -(dp * sr) + dy * cr * cp;

    let attitude = UnitQuaternion::from_euler_angles(roll.value(), pitch.value(), yaw.value());
    Reference {
        position: Vector3::new(position[0].value(), position[1].value(), position[2].value()),
        velocity: Vector3::new(position[0].d(1), position[1].d(1), position[2].d(1)),
        acceleration: Vector3::new(position[0].d(2), position[1].d(2), position[2].d(2)),
        attitude,
        angular_velocity: Vector3::new(wx.value(), wy.value(), wz.value()),
        angular_acceleration: Vector3::new(wx.d(1), wy.d(1), wz.d(1)),
    }
}

/// Largest attitude tilt of body z from vertical over a trajectory, sampled
/// at `dt`, rad.
pub fn peak_tilt(spec: &TrajectorySpec, dt: f64) -> f64 {
    let n = (spec.duration / dt).round() as usize;
    (0..=n)
        .map(|i| {
            let z = generate_reference(spec, (i as f64 * dt).min(spec.duration)).attitude * Vector3::z();
            z.z.clamp(-1.0, 1.0).acos()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate_from_quaternions(spec: &TrajectorySpec, t: f64, h: f64) -> Vector3<f64> {
        let a = generate_reference(spec, t - h).attitude;
        let b = generate_reference(spec, t + h).attitude;
        (a.inverse() * b).scaled_axis() / (2.0 * h)
    }

    #[test]
    fn jet_products_match_closed_forms() {
        let t = 0.7;
        let s = Jet::time(t).sin() * Jet::time(t).cos();
        // sin t cos t = ½ sin 2t
        let expect = [0.5 * (2.0 * t).sin(), (2.0 * t).cos(), -2.0 * (2.0 * t).sin(), -4.0 * (2.0 * t).cos()];
        for k in 0..4 {
            assert!((s.d(k) - expect[k]).abs() < 1e-14);
        }
        let r = (Jet::constant(2.0) + Jet::time(t)).recip();
        let x = 2.0 + t;
        let expect = [1.0 / x, -1.0 / (x * x), 2.0 / x.powi(3), -6.0 / x.powi(4)];
        for k in 0..4 {
            assert!((r.d(k) - expect[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn pitch_sweep_endpoints_are_at_rest() {
        let spec = TrajectorySpec::pitch_sweep();
        for t in [0.0, spec.duration] {
            let r = generate_reference(&spec, t);
            assert!(r.attitude.angle() < 1e-15);
            assert!(r.angular_velocity.norm() < 1e-15);
        }
    }

    #[test]
    fn pitch_sweep_peaks_at_amplitude() {
        let spec = TrajectorySpec::pitch_sweep();
        let mid = generate_reference(&spec, spec.duration / 2.0);
        let (_, pitch, _) = mid.attitude.euler_angles();
        assert!((pitch - 60f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn pitch_sweep_respects_acceleration_bound() {
        let spec = TrajectorySpec::pitch_sweep();
        let h = 1e-3;
        let pitch = |t: f64| generate_reference(&spec, t).attitude.euler_angles().1;
        let mut peak = 0.0f64;
        let mut t = h;
        while t < spec.duration - h {
            peak = peak.max(((pitch(t + h) - 2.0 * pitch(t) + pitch(t - h)) / (h * h)).abs());
            t += 0.5 * h;
        }
        assert!(peak <= 1.0 + 1e-6, "{peak}");
        assert!(peak > 0.99);
        let r = generate_reference(&spec, 3.0);
        assert!(r.angular_acceleration.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn body_rates_match_attitude_derivative() {
        let specs = [
            TrajectorySpec::figure8(),
            TrajectorySpec::pitch_sweep().with_excitation(Excitation::default_set()),
            TrajectorySpec::hover(10.0).with_excitation(Excitation::default_set()),
        ];
        for spec in &specs {
            for &t in &[0.9, 3.3, 4.1, 7.7] {
                let r = generate_reference(spec, t);
                let fd = rate_from_quaternions(spec, t, 1e-5);
                assert!((r.angular_velocity - fd).norm() < 1e-7, "{:?} t={t} {} {}", spec.kind, r.angular_velocity, fd);
                let h = 1e-4;
                let dw = (generate_reference(spec, t + h).angular_velocity - generate_reference(spec, t - h).angular_velocity) / (2.0 * h);
                assert!((r.angular_acceleration - dw).norm() < 1e-6, "{:?} t={t}", spec.kind);
            }
        }
    }

    #[test]
    fn figure8_path_and_tilt() {
        let spec = TrajectorySpec::figure8();
        let r0 = generate_reference(&spec, 0.0);
        assert!((r0.position - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-15);
        let h = 1e-4;
        for &t in &[1.0, 6.0, 13.0] {
            let r = generate_reference(&spec, t);
            let v = (generate_reference(&spec, t + h).position - generate_reference(&spec, t - h).position) / (2.0 * h);
            assert!((r.velocity - v).norm() < 1e-7);
            let a = (generate_reference(&spec, t + h).velocity - generate_reference(&spec, t - h).velocity) / (2.0 * h);
            assert!((r.acceleration - a).norm() < 1e-7);
            // Body z leans towards the direction of travel.
            let z = r.attitude * Vector3::z();
            assert!(z.xy().dot(&r.velocity.xy()) > 0.0);
        }
        let span = (0..200).map(|i| generate_reference(&spec, i as f64 * 0.1).position.x).fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((span - 2.0).abs() < 1e-12);
        let tilt = peak_tilt(&spec, 0.01);
        assert!(tilt <= 63f64.to_radians() + 1e-9 && tilt > 62f64.to_radians(), "{}", tilt.to_degrees());
    }

    #[test]
    fn step_switches_at_step_time() {
        let spec = TrajectorySpec::step();
        assert!(generate_reference(&spec, 0.99).attitude.angle() < 1e-15);
        let r = generate_reference(&spec, 1.0);
        assert!((r.attitude.euler_angles().0 - 40f64.to_radians()).abs() < 1e-12);
        assert_eq!(r.angular_velocity, Vector3::zeros());
    }

    #[test]
    fn out_of_range_time_is_clamped() {
        let spec = TrajectorySpec::pitch_sweep();
        assert_eq!(generate_reference(&spec, -1.0), generate_reference(&spec, 0.0));
        assert_eq!(generate_reference(&spec, 99.0), generate_reference(&spec, spec.duration));
    }

    #[test]
    fn validation() {
        assert!(TrajectorySpec::pitch_sweep().validate().is_ok());
        assert!(TrajectorySpec { duration: 4.0, ..TrajectorySpec::pitch_sweep() }.validate().is_err());
        assert!(TrajectorySpec { duration: 0.0, ..TrajectorySpec::hover(1.0) }.validate().is_err());
        assert!(TrajectorySpec { max_angular_accel: 0.0, ..TrajectorySpec::hover(1.0) }.validate().is_err());
        let bad = TrajectorySpec::hover(1.0).with_excitation(vec![Excitation { axis: 3, amplitude: 0.1, frequency: 1.0 }]);
        assert!(bad.validate().is_err());
    }
}
