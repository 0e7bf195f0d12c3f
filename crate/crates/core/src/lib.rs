//! Screenline-based calibration of a tour-based freight demand model.
//!
//! The pipeline simulates long-term commodity flows and daily tours, groups
//! tours by the ordered screenlines they cross, solves a ridge problem for
//! the per-class adjustment that closes the gap to observed counts, and feeds
//! the adjusted tours back as quasi-observations to re-estimate the demand
//! model.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjust;
pub mod calibration;
pub mod demand;
pub mod error;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod slb;
pub mod synth;

pub use calibration::{run_calibration, CalibrationConfig, CalibrationState};
pub use error::{Error, Result};
pub use scenario::{simulate, DemandParams, Scenario, SimulationOutput, SimulationSettings};
pub use synth::{synth, ScenarioConfig, SynthScenario};
