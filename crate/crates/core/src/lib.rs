//! Simulation toolkit for the hover/cruise transition of a tail-sitter UAV.
//!
//! The toolkit models the longitudinal dynamics of the vehicle, trains
//! continuous-time recurrent networks to estimate the nonlinear aerodynamic
//! accelerations, and closes the loop with a feedback-linearizing velocity
//! controller cascaded into a proportional-derivative pitch loop. Everything
//! is fixed-step, 64-bit and deterministic for a given seed.

pub mod config;
pub mod controller;
pub mod error;
pub mod guidance;
pub mod io;
pub mod rnn;
pub mod sim;
pub mod training;
pub mod vehicle;

pub use error::{Error, Result};
pub use guidance::{DesiredState, ShapingConstants, TransitionMode};
pub use rnn::{Channel, RnnNetwork};
pub use sim::{ScenarioConfig, TrajectoryLog};
pub use training::{Dataset, ExcitationConfig, TrainingReport};
pub use vehicle::{AeroParams, AttState, ControlInput, LongState, VehicleParams};
