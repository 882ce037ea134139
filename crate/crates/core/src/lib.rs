pub mod analyzer;
pub mod calibration;
pub mod capricep;
pub mod dsp;
pub mod error;
mod float_serde;
pub mod fo_tracker;
pub mod orthomix;
pub mod rng;
pub mod rt_engine;
pub mod service;
pub mod session;
pub mod sim_subject;
pub mod stimulus;

pub use error::{Error, Result};
