#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use tiltgp::actuation::{forward_model, Allocator, VehicleGeometry};
use tiltgp::controller::{desired_wrench, tracking_errors, ControllerGains, IntegralState, Reference};
use tiltgp::gp::{FitConfig, GpModel, Input, Provenance, TrainingSet};
use tiltgp::rigid_body::{InertialParams, RigidBody, GRAVITY};
use tiltgp::simulator::{CONTROL_PERIOD, PLANT_SUBSTEPS};
use tiltgp::State;

pub const HOVER_THRUST: f64 = 4.0 * GRAVITY;

/// Commanded wrenches on a grid over the torque axes around hover, with
/// torque-axis targets `g(W)`.
pub fn torque_grid_set(points_per_axis: usize, half_width: f64, g: impl Fn(&Vector6<f64>) -> [f64; 3]) -> TrainingSet {
    let step = 2.0 * half_width / (points_per_axis - 1) as f64;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for i in 0..points_per_axis {
        for j in 0..points_per_axis {
            for k in 0..points_per_axis {
                let at = |n: usize| -half_width + step * n as f64;
                let w = Vector6::new(0.0, 0.0, HOVER_THRUST, at(i), at(j), at(k));
                inputs.push([w[0], w[1], w[2], w[3], w[4], w[5]]);
                targets.push(g(&w).to_vec());
            }
        }
    }
    let n = inputs.len();
    TrainingSet {
        axes: vec![3, 4, 5],
        inputs,
        targets,
        provenance: Provenance { episode: "grid".into(), seed: 0, config_hash: String::new(), timestamps: vec![0.0; n] },
    }
}

pub fn fit(set: &TrainingSet) -> GpModel {
    GpModel::fit(set, &FitConfig::default()).unwrap()
}

pub fn hover_wrench(torque: Vector3<f64>) -> Input {
    Vector6::new(0.0, 0.0, HOVER_THRUST, torque.x, torque.y, torque.z)
}

/// Closed loop with a perfect actuator model and no mismatch, starting from
/// hover with a rotation of `theta` about body x. Returns `(t, e_R)` at every
/// control tick.
pub fn attitude_offset_response(theta: f64, duration: f64, gains: &ControllerGains) -> Vec<(f64, Vector3<f64>)> {
    let body = RigidBody::new(InertialParams::default(), GRAVITY).unwrap();
    let alloc = Allocator::new(VehicleGeometry::default()).unwrap();
    let reference = Reference::hover_at(Vector3::zeros());
    let mut state = State { attitude: UnitQuaternion::from_scaled_axis(Vector3::x() * theta), ..State::default() };
    let mut integral = IntegralState::default();
    let mut tilt = [0.0; 6];
    let h = CONTROL_PERIOD / PLANT_SUBSTEPS as f64;
    let ticks = (duration / CONTROL_PERIOD).round() as usize;
    let mut out = Vec::with_capacity(ticks + 1);
    for n in 0..=ticks {
        let t = n as f64 * CONTROL_PERIOD;
        let (e_r, _) = tracking_errors(&state, &reference);
        out.push((t, e_r));
        let w = desired_wrench(&state, &reference, gains, &body, CONTROL_PERIOD, &mut integral);
        let a = alloc.allocate(&w, &tilt).unwrap();
        tilt = a.command.tilt;
        let realized = forward_model(&a.command, alloc.geometry());
        for _ in 0..PLANT_SUBSTEPS {
            state = body.step(&state, &realized, h).unwrap();
        }
    }
    out
}

/// `θ̈ = −2ζω θ̇ − ω² sin θ` by RK4, sampled every `CONTROL_PERIOD`.
/// The single-axis attitude error of the loop above is `sin θ`.
pub fn scalar_attitude_model(theta: f64, zeta: f64, omega: f64, duration: f64) -> Vec<(f64, f64)> {
    let f = |x: [f64; 2]| [x[1], -2.0 * zeta * omega * x[1] - omega * omega * x[0].sin()];
    let h = 1e-4;
    let per_tick = (CONTROL_PERIOD / h).round() as usize;
    let ticks = (duration / CONTROL_PERIOD).round() as usize;
    let mut x = [theta, 0.0];
    let mut out = Vec::with_capacity(ticks + 1);
    for n in 0..=ticks {
        out.push((n as f64 * CONTROL_PERIOD, x[0].sin()));
        for _ in 0..per_tick {
            let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
            let k1 = f(x);
            let k2 = f(add(x, k1, h / 2.0));
            let k3 = f(add(x, k2, h / 2.0));
            let k4 = f(add(x, k3, h));
            x = [
                x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
        }
    }
    out
}
