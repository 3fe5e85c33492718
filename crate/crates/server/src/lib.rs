//! Central fleet server: telemetry and health ingestion, whitelist and
//! heartbeat permissions, the measurement relay, and per-VIN software
//! version assignment. State is an in-memory index over an append-only log.

pub mod clock;
pub mod error;
pub mod http;
pub mod log;
pub mod server;
pub mod state;

pub use clock::{Clock, ManualClock, WallClock};
pub use error::{LogError, ServerError};
pub use http::{router, serve, serve_until};
pub use log::{parse_log, read_log, LogRecord, LogWriter};
pub use server::{FleetServer, ServerConfig};
pub use state::FleetState;
