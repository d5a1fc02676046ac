//! Learned actuation-mismatch compensation for a tilt-arm hexarotor.

pub mod actuation;
pub mod compensator;
pub mod controller;
pub mod error;
pub mod gp;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod rigid_body;
pub mod simulator;

pub use error::{Error, Result};
pub use rigid_body::{Frame, State, Wrench};
