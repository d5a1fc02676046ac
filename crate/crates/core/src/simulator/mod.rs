//! Closed-loop simulation of the tilt-arm vehicle.

mod episode;
mod log;
mod reference;

pub use episode::{
    collect_training_data, run_episode, training_pairs, Compensation, EpisodeLog, TickRecord, VehicleConfig,
    CONTROL_PERIOD, DIVERGENCE_RATE, PLANT_SUBSTEPS,
};
pub use log::{EPISODE_FORMAT, TICK_COLUMNS};
pub use reference::{generate_reference, peak_tilt, Excitation, TrajectoryKind, TrajectorySpec, FIGURE8_HALF_SPAN, FIGURE8_PERIOD};
