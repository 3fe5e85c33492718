use cavfleet_core::wire::ValidationError;
use cavfleet_core::Vin;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("log line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("encoding log record: {0}")]
    Encode(#[source] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("inverted range [{lo}, {hi}]")]
    InvertedRange { lo: f64, hi: f64 },
    #[error("unknown version set {0:?}")]
    UnknownVersionSet(String),
    #[error("heartbeat for {vin} at t={t} precedes the last one at t={last}")]
    HeartbeatRegressed { vin: Vin, t: f64, last: f64 },
    #[error("invalid server config: {0}")]
    Config(String),
    #[error(transparent)]
    Log(#[from] LogError),
}
