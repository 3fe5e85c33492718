//! Message types exchanged between vehicles, the fleet server and the
//! operator dashboard. Field names are the JSON wire names. Timestamps are
//! seconds since the scenario epoch.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road::Heading;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vin(pub String);

impl Vin {
    pub fn new(s: impl Into<String>) -> Self {
        Vin(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Vin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Vin {
    fn from(s: &str) -> Self {
        Vin(s.to_owned())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid {kind}: {reason}")]
pub struct ValidationError {
    pub kind: &'static str,
    pub reason: String,
}

fn check(kind: &'static str, ok: bool, reason: impl FnOnce() -> String) -> Result<(), ValidationError> {
    if ok {
        Ok(())
    } else {
        Err(ValidationError {
            kind,
            reason: reason(),
        })
    }
}

fn check_vin(kind: &'static str, vin: &Vin) -> Result<(), ValidationError> {
    check(kind, !vin.0.trim().is_empty(), || "vin must not be empty".into())
}

fn check_finite(kind: &'static str, name: &str, v: f64) -> Result<(), ValidationError> {
    check(kind, v.is_finite(), || format!("{name} must be finite"))
}

/// The 1 Hz live-tracking message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub vin: Vin,
    pub t: f64,
    pub mile_marker: f64,
    pub lane: u32,
    pub speed: f64,
    pub accel: f64,
    pub control_engaged: bool,
    pub westbound: bool,
    /// Route segment the vehicle is on. Older senders omit it; readers
    /// then fall back to the `westbound` flag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Heading>,
    /// Speed the experimental controller is commanding, when engaged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commanded_speed: Option<f64>,
}

impl TelemetryRecord {
    pub fn validate(&self) -> Result<(), ValidationError> {
        const K: &str = "telemetry record";
        check_vin(K, &self.vin)?;
        check_finite(K, "t", self.t)?;
        check_finite(K, "mile_marker", self.mile_marker)?;
        check_finite(K, "accel", self.accel)?;
        check(K, self.speed.is_finite() && self.speed >= 0.0, || {
            format!("speed must be non-negative, got {}", self.speed)
        })?;
        if let Some(c) = self.commanded_speed {
            check(K, c.is_finite() && c >= 0.0, || {
                format!("commanded_speed must be non-negative, got {c}")
            })?;
        }
        Ok(())
    }

    pub fn effective_heading(&self) -> Heading {
        self.heading.unwrap_or(if self.westbound {
            Heading::Westbound
        } else {
            Heading::Eastbound
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RepoHash {
    pub repo: String,
    pub hash: String,
}

impl RepoHash {
    pub fn new(repo: impl Into<String>, hash: impl Into<String>) -> Self {
        Self {
            repo: repo.into(),
            hash: hash.into(),
        }
    }
}

/// Periodic self-reported vehicle health.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub vin: Vin,
    pub t: f64,
    pub battery_voltage: f64,
    pub software_version_hashes: Vec<RepoHash>,
    pub uptime: f64,
    pub recording: bool,
}

impl HealthReport {
    pub fn validate(&self) -> Result<(), ValidationError> {
        const K: &str = "health report";
        check_vin(K, &self.vin)?;
        check_finite(K, "t", self.t)?;
        check(K, self.battery_voltage.is_finite() && self.battery_voltage > 0.0, || {
            format!("battery_voltage must be positive, got {}", self.battery_voltage)
        })?;
        check(K, self.uptime.is_finite() && self.uptime >= 0.0, || {
            "uptime must be non-negative".into()
        })
    }
}

/// Speed measurement shared with the rest of the fleet through the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayMeasurement {
    pub source_vin: Vin,
    pub t: f64,
    pub mile_marker: f64,
    pub lane: u32,
    pub speed: f64,
    /// Travel direction of the source; lets controllers ignore the
    /// opposite carriageway.
    #[serde(default)]
    pub westbound: bool,
}

impl RelayMeasurement {
    pub fn validate(&self) -> Result<(), ValidationError> {
        const K: &str = "relay measurement";
        check_vin(K, &self.source_vin)?;
        check_finite(K, "t", self.t)?;
        check_finite(K, "mile_marker", self.mile_marker)?;
        check(K, self.speed.is_finite() && self.speed >= 0.0, || {
            format!("speed must be non-negative, got {}", self.speed)
        })
    }
}

/// A registered bundle of repository hashes plus the controller variant it installs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionSet {
    pub id: String,
    pub hashes: Vec<RepoHash>,
    /// Controller variant name, resolved by the vehicle at boot.
    pub controller: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionAssignment {
    pub vin: Vin,
    pub version_set_id: String,
    pub hashes: Vec<RepoHash>,
    pub controller: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatRequest {
    pub vin: Vin,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatResponse {
    pub vin: Vin,
    pub t: f64,
    pub whitelisted: bool,
    pub allowed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitelistState {
    pub vin: Vin,
    pub whitelisted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitelistUpdate {
    pub whitelisted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentUpdate {
    pub version_set_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryAck {
    pub vin: Vin,
    pub t: f64,
    /// True when the record was older than the latest indexed one.
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
}

/// Query window for `GET /relay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelayQuery {
    pub mm_lo: f64,
    pub mm_hi: f64,
    pub max_age: f64,
}

impl RelayQuery {
    pub fn validate(&self) -> Result<(), ValidationError> {
        const K: &str = "relay query";
        check_finite(K, "mm_lo", self.mm_lo)?;
        check_finite(K, "mm_hi", self.mm_hi)?;
        check(K, self.mm_lo <= self.mm_hi, || {
            format!("inverted range [{}, {}]", self.mm_lo, self.mm_hi)
        })?;
        check(K, self.max_age.is_finite() && self.max_age > 0.0, || {
            format!("max_age must be positive, got {}", self.max_age)
        })
    }
}

/// One row of `GET /fleet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetEntry {
    pub telemetry: TelemetryRecord,
    pub staleness: f64,
    pub stale: bool,
    pub whitelisted: bool,
    pub allow: bool,
    pub version_set_id: String,
    pub low_battery: bool,
    pub version_mismatch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_voltage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
