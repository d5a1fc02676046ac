//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiltgp::controller::ControllerGains;
use tiltgp::gp::{kmedoids_subsample, FitConfig, GpModel, Input, TrainingSet};
use tiltgp::harness::ExperimentConfig;
use tiltgp::simulator::{collect_training_data, run_episode, VehicleConfig};
use tiltgp::Wrench;

/// Subsampled training set of the default pipeline.
pub fn training_set(seed: u64) -> TrainingSet {
    let cfg = ExperimentConfig::with_seed(seed);
    let vehicle = cfg.vehicle_config().expect("default config is valid");
    let raw = collect_training_data(&cfg.train_trajectory, &vehicle, &cfg.controller, seed).expect("training flight is stable");
    kmedoids_subsample(&raw, cfg.gp.subsample, seed).expect("enough data")
}

pub fn model(set: &TrainingSet) -> GpModel {
    GpModel::fit(set, &FitConfig::default()).expect("fit succeeds on pipeline data")
}

/// Desired wrenches of an uncompensated evaluation flight, in order.
pub fn evaluation_wrenches(seed: u64) -> Vec<Wrench> {
    let cfg = ExperimentConfig::with_seed(seed);
    let log = run_episode(&cfg.eval_trajectory, &VehicleConfig::default(), &ControllerGains::simulation(), None, seed)
        .expect("evaluation flight runs");
    log.rows.iter().map(|r| Wrench::from_body_vector(&r.w_des)).collect()
}

/// Random queries in the box spanned by the training inputs.
pub fn queries(set: &TrainingSet, n: usize, seed: u64) -> Vec<Input> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = Input::from_fn(|d, _| set.inputs.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min));
    let hi = Input::from_fn(|d, _| set.inputs.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max));
    (0..n)
        .map(|_| Input::from_fn(|d, _| if hi[d] > lo[d] { rng.random_range(lo[d]..hi[d]) } else { lo[d] }))
        .collect()
}
