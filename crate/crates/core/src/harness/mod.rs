//! Experiment pipeline: collect → subsample → fit → evaluate → report.
//!
//! Each run writes into one output directory:
//!
//! ```text
//! config.toml          resolved configuration
//! training_set.json    subsampled training pairs
//! model.json           fitted model
//! logs/off_NN.csv      evaluation episodes without compensation
//! logs/on_NN.csv       evaluation episodes with compensation
//! reports/prediction.csv
//! reports/tracking.csv
//! reports/summary.txt
//! ```

mod config;
mod pipeline;

pub use config::{
    apply_override, EvaluationSection, ExperimentConfig, GpSection, MismatchSection, OutputSection, VehicleSection,
};
pub use pipeline::{cmd_all, cmd_collect, cmd_evaluate, cmd_report, cmd_train, Evaluation, RunPaths};
