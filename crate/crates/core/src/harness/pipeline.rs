use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gp::{kmedoids_subsample, GpModel, TrainingSet};
use crate::metrics::{prediction_report_pooled, tracking_report_pooled, PredictionReport, TrackingReport};
use crate::simulator::{collect_training_data, run_episode, Compensation, EpisodeLog};

/// File layout of one run directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn training_set(&self) -> PathBuf {
        self.root.join("training_set.json")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn log(&self, compensated: bool, repeat: usize) -> PathBuf {
        let arm = if compensated { "on" } else { "off" };
        self.logs().join(format!("{arm}_{repeat:02}.csv"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn check_hash(what: &str, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Config(format!(
            "{what} was produced for vehicle config {found:?}, but the current config hashes to {expected:?}"
        )));
    }
    Ok(())
}

fn paths(cfg: &ExperimentConfig) -> RunPaths {
    RunPaths::new(&cfg.output.directory)
}

/// Snapshot of the configuration the latest command ran with.
fn write_snapshot(cfg: &ExperimentConfig, p: &RunPaths) -> Result<()> {
    write(&p.config(), &format!("# config_hash: {}\n{}", cfg.config_hash()?, cfg.to_toml()?))
}

/// Fly the training trajectory, subsample it and write the training set.
pub fn cmd_collect(cfg: &ExperimentConfig) -> Result<TrainingSet> {
    let p = paths(cfg);
    write_snapshot(cfg, &p)?;
    let vehicle = cfg.vehicle_config()?;
    let hash = cfg.config_hash()?;
    let raw = collect_training_data(&cfg.train_trajectory, &vehicle, &cfg.controller, cfg.seed)?;
    log::info!("collected {} raw pairs", raw.len());
    if cfg.gp.subsample > raw.len() {
        return Err(Error::Config(format!(
            "gp.subsample = {} exceeds the {} collected pairs",
            cfg.gp.subsample,
            raw.len()
        )));
    }
    let mut set = kmedoids_subsample(&raw, cfg.gp.subsample, cfg.seed)?;
    set.provenance.config_hash = hash;
    set.provenance.seed = cfg.seed;
    write(&p.training_set(), &set.to_json()?)?;
    log::info!("wrote {} training pairs to {}", set.len(), p.training_set().display());
    Ok(set)
}

/// Fit the model to the stored training set and write it.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<GpModel> {
    let p = paths(cfg);
    let set = TrainingSet::from_json(&read(&p.training_set())?)?;
    check_hash("training set", &set.provenance.config_hash, &cfg.config_hash()?)?;
    write_snapshot(cfg, &p)?;
    let model = GpModel::fit(&set, &cfg.fit_config())?;
    for a in model.axes() {
        log::info!(
            "axis {}: log marginal likelihood {:.4}, {:?}",
            a.axis(),
            a.log_marginal_likelihood(),
            a.hyperparameters()
        );
    }
    write(&p.model(), &model.to_json()?)?;
    Ok(model)
}

/// Reports of one evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub prediction: PredictionReport,
    pub tracking: TrackingReport,
}

impl Evaluation {
    pub fn unstable(&self) -> usize {
        self.tracking.unstable_on + self.tracking.unstable_off
    }

    pub fn summary(&self) -> String {
        format!("{}\n{}", self.prediction, self.tracking)
    }
}

fn load_model(cfg: &ExperimentConfig, p: &RunPaths) -> Result<GpModel> {
    let model = GpModel::from_json(&read(&p.model())?)?;
    check_hash("model", &model.provenance().config_hash, &cfg.config_hash()?)?;
    Ok(model)
}

/// Noise seed of evaluation repeat `r`. Off and on share it.
fn repeat_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    cfg.seed.wrapping_add(1 + r as u64)
}

/// Fly the evaluation trajectory with compensation off and on, write the
/// logs and the reports.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Evaluation> {
    let p = paths(cfg);
    let model = load_model(cfg, &p)?;
    write_snapshot(cfg, &p)?;
    let vehicle = cfg.vehicle_config()?;
    let hash = cfg.config_hash()?;
    std::fs::create_dir_all(p.logs()).map_err(|e| Error::io(format!("creating {}", p.logs().display()), e))?;
    let jobs: Vec<(bool, usize)> = [false, true]
        .iter()
        .flat_map(|&on| (0..cfg.evaluation.repeats).map(move |r| (on, r)))
        .collect();
    let logs: Vec<EpisodeLog> = jobs
        .par_iter()
        .map(|&(on, r)| {
            let comp = on.then_some(Compensation { model: &model, config: &cfg.compensator });
            let mut log = run_episode(&cfg.eval_trajectory, &vehicle, &cfg.controller, comp, repeat_seed(cfg, r))?;
            log.config_hash = hash.clone();
            log.write(&p.log(on, r))?;
            Ok(log)
        })
        .collect::<Result<_>>()?;
    let (on, off): (Vec<EpisodeLog>, Vec<EpisodeLog>) = logs.into_iter().partition(|l| l.compensated);
    report(cfg, &p, &model, &off, &on)
}

/// Recompute the reports from the stored logs.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Evaluation> {
    let p = paths(cfg);
    let model = load_model(cfg, &p)?;
    let hash = cfg.config_hash()?;
    let load = |on: bool| -> Result<Vec<EpisodeLog>> {
        (0..cfg.evaluation.repeats)
            .map(|r| {
                let log = EpisodeLog::read(&p.log(on, r))?;
                check_hash("episode log", &log.config_hash, &hash)?;
                Ok(log)
            })
            .collect()
    };
    let off = load(false)?;
    let on = load(true)?;
    report(cfg, &p, &model, &off, &on)
}

fn report(cfg: &ExperimentConfig, p: &RunPaths, model: &GpModel, off: &[EpisodeLog], on: &[EpisodeLog]) -> Result<Evaluation> {
    // Prediction error is measured on the uncompensated evaluation flights,
    // which the model never saw.
    let eval = Evaluation {
        prediction: prediction_report_pooled(off, model)?,
        tracking: tracking_report_pooled(on, off)?,
    };
    let header = format!("# config_hash: {}\n# seed: {}\n", cfg.config_hash()?, cfg.seed);
    write(&p.reports().join("prediction.csv"), &format!("{header}{}", eval.prediction.to_csv()))?;
    write(&p.reports().join("tracking.csv"), &format!("{header}{}", eval.tracking.to_csv()))?;
    write(&p.reports().join("summary.txt"), &format!("{header}{}", eval.summary()))?;
    Ok(eval)
}

/// Collect, train and evaluate in one go.
pub fn cmd_all(cfg: &ExperimentConfig) -> Result<Evaluation> {
    cmd_collect(cfg)?;
    cmd_train(cfg)?;
    cmd_evaluate(cfg)
}
