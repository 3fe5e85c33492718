use cavfleet_core::analytics::AnalyticsError;
use cavfleet_core::{DynamicsError, Vin};
use cavfleet_server::{LogError, ServerError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("collision at tick {tick} (t={t:.3} s): {follower} ran into {leader}, gap {gap:.3} m")]
    Collision {
        tick: u64,
        t: f64,
        follower: Vin,
        leader: Vin,
        gap: f64,
    },
    #[error("vehicle {vin}: {source}")]
    Dynamics {
        vin: Vin,
        #[source]
        source: DynamicsError,
    },
    #[error("fleet server unreachable: {0}")]
    Unreachable(String),
    #[error("fleet server rejected {what}: HTTP {status}: {body}")]
    Rejected { what: String, status: u16, body: String },
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("run log integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{0}")]
    Usage(String),
}
