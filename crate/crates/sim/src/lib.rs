//! Deterministic simulation harness for the CAV fleet testbed: scenario
//! files, the simulation loop against an in-process fleet server, run logs
//! and their replay.

pub mod analyze;
pub mod client;
pub mod error;
pub mod harness;
pub mod runlog;
pub mod scenario;
pub mod stats;

pub use client::FleetClient;
pub use error::SimError;
pub use harness::{run, RunReport};
pub use runlog::{RunLog, StateFrame};
pub use scenario::ScenarioConfig;
