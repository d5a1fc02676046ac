//! Episode logs as CSV.
//!
//! A file starts with `#`-prefixed metadata lines, then one header row and
//! one row per control tick in the column order of [`TICK_COLUMNS`]. Floats
//! are written in shortest round-trip form, so reading a log back yields
//! bit-identical values.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector6};

use super::episode::{EpisodeLog, TickRecord};
use super::reference::TrajectorySpec;
use crate::actuation::{ActuatorCommand, ARMS, ROTORS};
use crate::controller::Reference;
use crate::error::{Error, Result};
use crate::rigid_body::State;

pub const EPISODE_FORMAT: &str = "tiltgp-episode/1";

fn vec_names(prefix: &str, axes: &[&str]) -> Vec<String> {
    axes.iter().map(|a| format!("{prefix}_{a}")).collect()
}

/// Column names of the per-tick rows, in file order.
pub static TICK_COLUMNS: LazyLock<Vec<String>> = LazyLock::new(|| {
    let xyz = ["x", "y", "z"];
    let quat = ["w", "x", "y", "z"];
    let wrench = ["fx", "fy", "fz", "mx", "my", "mz"];
    let mut c = vec!["time".to_string()];
    c.extend(vec_names("pos", &xyz));
    c.extend(vec_names("vel", &xyz));
    c.extend(vec_names("quat", &quat));
    c.extend(vec_names("omega", &xyz));
    c.extend(vec_names("ref_pos", &xyz));
    c.extend(vec_names("ref_vel", &xyz));
    c.extend(vec_names("ref_acc", &xyz));
    c.extend(vec_names("ref_quat", &quat));
    c.extend(vec_names("ref_omega", &xyz));
    c.extend(vec_names("ref_omega_dot", &xyz));
    c.extend(vec_names("w_des", &wrench));
    c.extend(vec_names("delta", &wrench));
    c.extend(vec_names("w_cmd", &wrench));
    c.extend((0..ROTORS).map(|i| format!("thrust_{i}")));
    c.extend((0..ARMS).map(|i| format!("tilt_{i}")));
    c.push("saturated".into());
    c.extend(vec_names("realized", &wrench));
    c.extend(vec_names("meas", &["mx", "my", "mz"]));
    c.extend(vec_names("e_p", &xyz));
    c.extend(vec_names("e_r", &xyz));
    c.extend(["beta", "sigma", "cost", "iterations"].map(String::from));
    c
});

fn push_quat(out: &mut Vec<f64>, q: &UnitQuaternion<f64>) {
    out.extend([q.w, q.i, q.j, q.k]);
}

impl TickRecord {
    fn to_values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(TICK_COLUMNS.len());
        v.push(self.time);
        let s = &self.state;
        v.extend(s.position.iter());
        v.extend(s.velocity.iter());
        push_quat(&mut v, &s.attitude);
        v.extend(s.angular_velocity.iter());
        let r = &self.reference;
        v.extend(r.position.iter());
        v.extend(r.velocity.iter());
        v.extend(r.acceleration.iter());
        push_quat(&mut v, &r.attitude);
        v.extend(r.angular_velocity.iter());
        v.extend(r.angular_acceleration.iter());
        v.extend(self.w_des.iter());
        v.extend(self.delta.iter());
        v.extend(self.w_cmd.iter());
        v.extend(self.command.thrusts);
        v.extend(self.command.tilt);
        v.push(if self.saturated { 1.0 } else { 0.0 });
        v.extend(self.realized.iter());
        v.extend(self.measured_torque.iter());
        v.extend(self.e_p.iter());
        v.extend(self.e_r.iter());
        v.extend([self.beta, self.sigma, self.cost, self.iterations as f64]);
        v
    }

    fn from_values(v: &[f64]) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &v[at..at + n];
            at += n;
            s
        };
        let v3 = |s: &[f64]| Vector3::from_column_slice(s);
        // Stored quaternions are already unit length; skip renormalization
        // so values survive the round trip bit for bit.
        let quat = |s: &[f64]| UnitQuaternion::new_unchecked(Quaternion::new(s[0], s[1], s[2], s[3]));
        let time = take(1)[0];
        let state = State {
            position: v3(take(3)),
            velocity: v3(take(3)),
            attitude: quat(take(4)),
            angular_velocity: v3(take(3)),
        };
        let reference = Reference {
            position: v3(take(3)),
            velocity: v3(take(3)),
            acceleration: v3(take(3)),
            attitude: quat(take(4)),
            angular_velocity: v3(take(3)),
            angular_acceleration: v3(take(3)),
        };
        let w_des = Vector6::from_column_slice(take(6));
        let delta = Vector6::from_column_slice(take(6));
        let w_cmd = Vector6::from_column_slice(take(6));
        let command = ActuatorCommand {
            thrusts: take(ROTORS).try_into().expect("length"),
            tilt: take(ARMS).try_into().expect("length"),
        };
        let saturated = take(1)[0] != 0.0;
        let realized = Vector6::from_column_slice(take(6));
        let measured_torque = v3(take(3));
        let e_p = v3(take(3));
        let e_r = v3(take(3));
        let tail = take(4);
        TickRecord {
            time,
            state,
            reference,
            w_des,
            delta,
            w_cmd,
            command,
            saturated,
            realized,
            measured_torque,
            e_p,
            e_r,
            beta: tail[0],
            sigma: tail[1],
            cost: tail[2],
            iterations: tail[3] as usize,
        }
    }
}

impl EpisodeLog {
    pub fn to_csv(&self) -> Result<String> {
        let spec = serde_json::to_string(&self.spec).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = String::new();
        writeln!(out, "# format: {EPISODE_FORMAT}").expect("string write");
        writeln!(out, "# spec: {spec}").expect("string write");
        writeln!(out, "# seed: {}", self.seed).expect("string write");
        writeln!(out, "# compensated: {}", self.compensated).expect("string write");
        writeln!(out, "# unstable: {}", self.unstable).expect("string write");
        writeln!(out, "# config_hash: {}", self.config_hash).expect("string write");
        out.push_str(&TICK_COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            let values = row.to_values();
            for (i, x) in values.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{x}").expect("string write");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.next_if(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            if let Some((k, v)) = body.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let field = |k: &str| meta.get(k).ok_or_else(|| Error::Format(format!("episode log lacks `{k}`")));
        if field("format")? != EPISODE_FORMAT {
            return Err(Error::Format(format!("unsupported episode format {:?}", field("format")?)));
        }
        let spec: TrajectorySpec = serde_json::from_str(field("spec")?).map_err(|e| Error::Format(e.to_string()))?;
        let parse_bool = |k: &str| -> Result<bool> { field(k)?.parse().map_err(|_| Error::Format(format!("bad `{k}`"))) };
        let seed = field("seed")?.parse().map_err(|_| Error::Format("bad `seed`".into()))?;
        let compensated = parse_bool("compensated")?;
        let unstable = parse_bool("unstable")?;
        let config_hash = field("config_hash")?.clone();

        let header = lines.next().ok_or_else(|| Error::Format("episode log lacks a header".into()))?;
        if header.split(',').ne(TICK_COLUMNS.iter().map(String::as_str)) {
            return Err(Error::Format("unexpected episode log columns".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let values: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?;
            if values.len() != TICK_COLUMNS.len() {
                return Err(Error::Format(format!("row {} has {} fields", i + 1, values.len())));
            }
            rows.push(TickRecord::from_values(&values));
        }
        Ok(EpisodeLog { spec, seed, compensated, unstable, config_hash, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_csv(&text)
    }
}
