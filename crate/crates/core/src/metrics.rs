//! Evaluation statistics: torque prediction error and attitude tracking
//! error.
//!
//! Percent changes are `100 (1 − new / baseline)`: positive means the learned
//! or compensated variant is better.

use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::simulator::EpisodeLog;

const AXES: [&str; 3] = ["x", "y", "z"];

/// `100 (1 − new / baseline)`; zero when both are zero.
pub fn percent_reduction(baseline: f64, new: f64) -> f64 {
    if baseline == 0.0 {
        if new == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        100.0 * (1.0 - new / baseline)
    }
}

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisPrediction {
    pub nominal_mean: f64,
    pub nominal_std: f64,
    pub learned_mean: f64,
    pub learned_std: f64,
    pub reduction_percent: f64,
}

/// Absolute torque prediction errors per body axis. Nominal predicts the
/// commanded torque, learned adds the model mean at the commanded wrench.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionReport {
    pub samples: usize,
    pub axes: [AxisPrediction; 3],
}

pub fn prediction_report(log: &EpisodeLog, model: &GpModel) -> Result<PredictionReport> {
    prediction_report_pooled(std::slice::from_ref(log), model)
}

/// Prediction report over the ticks of several logs.
pub fn prediction_report_pooled(logs: &[EpisodeLog], model: &GpModel) -> Result<PredictionReport> {
    let samples: usize = logs.iter().map(|l| l.rows.len()).sum();
    if samples == 0 {
        return Err(Error::InvalidParameter("prediction report needs a non-empty log".into()));
    }
    let mut nominal = [const { Vec::new() }; 3];
    let mut learned = [const { Vec::new() }; 3];
    for row in logs.iter().flat_map(|l| &l.rows) {
        let mu = model.predict_mean(&row.w_cmd);
        for j in 0..3 {
            let cmd = row.w_cmd[3 + j];
            nominal[j].push((cmd - row.measured_torque[j]).abs());
            learned[j].push((mu[3 + j] + cmd - row.measured_torque[j]).abs());
        }
    }
    let axes = std::array::from_fn(|j| {
        let (nominal_mean, nominal_std) = mean_std(&nominal[j]);
        let (learned_mean, learned_std) = mean_std(&learned[j]);
        AxisPrediction {
            nominal_mean,
            nominal_std,
            learned_mean,
            learned_std,
            reduction_percent: percent_reduction(nominal_mean, learned_mean),
        }
    });
    Ok(PredictionReport { samples, axes })
}

impl PredictionReport {
    pub const CSV_HEADER: &'static str = "axis,nominal_mean,nominal_std,learned_mean,learned_std,reduction_percent";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (name, a) in AXES.iter().zip(&self.axes) {
            writeln!(
                out,
                "{name},{},{},{},{},{}",
                a.nominal_mean, a.nominal_std, a.learned_mean, a.learned_std, a.reduction_percent
            )
            .expect("string write");
        }
        out
    }
}

impl fmt::Display for PredictionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "torque prediction error, N·m ({} samples)", self.samples)?;
        writeln!(f, "axis   nominal (mean ± std)   learned (mean ± std)   reduction")?;
        for (name, a) in AXES.iter().zip(&self.axes) {
            writeln!(
                f,
                "{name:<6} {:>8.4} ± {:<10.4} {:>8.4} ± {:<10.4} {:>7.1}%",
                a.nominal_mean, a.nominal_std, a.learned_mean, a.learned_std, a.reduction_percent
            )?;
        }
        Ok(())
    }
}

/// Box statistics of `|e_R|` on one axis, rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
    pub rms: f64,
}

impl BoxStats {
    fn of(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        let rms = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        BoxStats {
            median: quantile(&xs, 0.5),
            q25: quantile(&xs, 0.25),
            q75: quantile(&xs, 0.75),
            min: xs[0],
            max: xs[xs.len() - 1],
            rms,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisTracking {
    pub off: BoxStats,
    pub on: BoxStats,
    pub median_reduction_percent: f64,
    pub rms_reduction_percent: f64,
}

/// Attitude tracking with compensation on against the baseline with it off.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingReport {
    pub episodes_on: usize,
    pub episodes_off: usize,
    pub unstable_on: usize,
    pub unstable_off: usize,
    pub axes: [AxisTracking; 3],
}

pub fn tracking_report(log_on: &EpisodeLog, log_off: &EpisodeLog) -> Result<TrackingReport> {
    tracking_report_pooled(std::slice::from_ref(log_on), std::slice::from_ref(log_off))
}

/// Tracking report over repeated episodes; ticks of all repeats are pooled.
pub fn tracking_report_pooled(on: &[EpisodeLog], off: &[EpisodeLog]) -> Result<TrackingReport> {
    let spec = on
        .first()
        .or(off.first())
        .map(|l| &l.spec)
        .ok_or_else(|| Error::InvalidParameter("tracking report needs episodes".into()))?;
    if on.iter().chain(off).any(|l| &l.spec != spec) {
        return Err(Error::InvalidParameter("tracking report compares episodes of different trajectories".into()));
    }
    let collect = |logs: &[EpisodeLog], j: usize| -> Result<Vec<f64>> {
        let xs: Vec<f64> = logs.iter().flat_map(|l| &l.rows).map(|r| r.e_r[j].abs()).collect();
        if xs.is_empty() {
            return Err(Error::InvalidParameter("tracking report needs non-empty logs".into()));
        }
        Ok(xs)
    };
    let mut axes = Vec::with_capacity(3);
    for j in 0..3 {
        let off_stats = BoxStats::of(collect(off, j)?);
        let on_stats = BoxStats::of(collect(on, j)?);
        axes.push(AxisTracking {
            off: off_stats,
            on: on_stats,
            median_reduction_percent: percent_reduction(off_stats.median, on_stats.median),
            rms_reduction_percent: percent_reduction(off_stats.rms, on_stats.rms),
        });
    }
    Ok(TrackingReport {
        episodes_on: on.len(),
        episodes_off: off.len(),
        unstable_on: on.iter().filter(|l| l.unstable).count(),
        unstable_off: off.iter().filter(|l| l.unstable).count(),
        axes: axes.try_into().expect("three axes"),
    })
}

impl TrackingReport {
    pub const CSV_HEADER: &'static str = "axis,off_median,off_q25,off_q75,off_rms,on_median,on_q25,on_q75,on_rms,median_reduction_percent,rms_reduction_percent";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (name, a) in AXES.iter().zip(&self.axes) {
            writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{},{},{}",
                a.off.median,
                a.off.q25,
                a.off.q75,
                a.off.rms,
                a.on.median,
                a.on.q25,
                a.on.q75,
                a.on.rms,
                a.median_reduction_percent,
                a.rms_reduction_percent
            )
            .expect("string write");
        }
        out
    }
}

impl fmt::Display for TrackingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "attitude tracking |e_R|, rad ({} episodes off, {} on; unstable {} off, {} on)",
            self.episodes_off, self.episodes_on, self.unstable_off, self.unstable_on
        )?;
        writeln!(
            f,
            "{:<6} {:>17} {:>8}  {:>17} {:>8}  {:>7} {:>7}",
            "axis", "off median [IQR]", "off rms", "on median [IQR]", "on rms", "median", "rms"
        )?;
        for (name, a) in AXES.iter().zip(&self.axes) {
            writeln!(
                f,
                "{name:<6} {:>8.4} [{:.4}] {:>8.4}  {:>8.4} [{:.4}] {:>8.4}  {:>6.1}% {:>6.1}%",
                a.off.median,
                a.off.iqr(),
                a.off.rms,
                a.on.median,
                a.on.iqr(),
                a.on.rms,
                a.median_reduction_percent,
                a.rms_reduction_percent
            )?;
        }
        Ok(())
    }
}
