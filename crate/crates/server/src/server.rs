use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use cavfleet_core::wire::{
    Ack, FleetEntry, HealthReport, HeartbeatRequest, HeartbeatResponse, RelayMeasurement, RelayQuery,
    TelemetryAck, TelemetryRecord, ValidationError, VersionAssignment, VersionSet, WhitelistState,
};
use cavfleet_core::Vin;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{LogError, ServerError};
use crate::log::{read_log, LogRecord, LogWriter};
use crate::state::{FleetState, HealthIndex, Permissions, RelayIndex, TelemetryIndex, Versions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_heartbeat_timeout")]
    pub heartbeat_timeout: f64,
    /// Seconds without telemetry before a VIN is flagged stale.
    #[serde(default = "default_staleness")]
    pub staleness_threshold: f64,
    #[serde(default = "default_low_battery")]
    pub low_battery_voltage: f64,
    #[serde(default = "default_relay_ttl")]
    pub relay_ttl: f64,
    #[serde(default = "default_set_id")]
    pub default_version_set: String,
    #[serde(default = "default_sets")]
    pub version_sets: Vec<VersionSet>,
}

fn default_heartbeat_timeout() -> f64 {
    0.5
}
fn default_staleness() -> f64 {
    5.0
}
fn default_low_battery() -> f64 {
    11.5
}
fn default_relay_ttl() -> f64 {
    60.0
}
fn default_set_id() -> String {
    "stock".into()
}
fn default_sets() -> Vec<VersionSet> {
    vec![VersionSet {
        id: default_set_id(),
        hashes: Vec::new(),
        controller: "stock".into(),
    }]
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            heartbeat_timeout: default_heartbeat_timeout(),
            staleness_threshold: default_staleness(),
            low_battery_voltage: default_low_battery(),
            relay_ttl: default_relay_ttl(),
            default_version_set: default_set_id(),
            version_sets: default_sets(),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        let positive = [
            ("heartbeat_timeout", self.heartbeat_timeout),
            ("staleness_threshold", self.staleness_threshold),
            ("relay_ttl", self.relay_ttl),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ServerError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.low_battery_voltage.is_finite() {
            return Err(ServerError::Config("low_battery_voltage must be finite".into()));
        }
        let mut ids: Vec<&str> = self.version_sets.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ServerError::Config("duplicate version set id".into()));
        }
        if !ids.contains(&self.default_version_set.as_str()) {
            return Err(ServerError::Config(format!(
                "default version set {:?} is not among version_sets",
                self.default_version_set
            )));
        }
        Ok(())
    }
}

fn read<T>(l: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(l: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|e| e.into_inner())
}

fn lock<T>(l: &Mutex<T>) -> MutexGuard<'_, T> {
    l.lock().unwrap_or_else(|e| e.into_inner())
}

fn check_vin(vin: &Vin) -> Result<(), ServerError> {
    if vin.0.trim().is_empty() {
        return Err(ValidationError {
            kind: "vin",
            reason: "vin must not be empty".into(),
        }
        .into());
    }
    Ok(())
}

/// The fleet server. Each store has its own lock and commits by appending
/// to the shared log while holding it, so per-store log order equals apply
/// order.
pub struct FleetServer {
    cfg: ServerConfig,
    clock: Arc<dyn Clock>,
    telemetry: RwLock<TelemetryIndex>,
    health: RwLock<HealthIndex>,
    permissions: RwLock<Permissions>,
    relay: RwLock<RelayIndex>,
    versions: RwLock<Versions>,
    log: Mutex<LogWriter>,
}

impl FleetServer {
    /// Server with an in-memory log.
    pub fn in_memory(cfg: ServerConfig, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        Self::build(cfg, clock, Vec::new(), LogWriter::in_memory())
    }

    /// Server backed by the log at `path`. An existing log is replayed first.
    pub fn open(cfg: ServerConfig, clock: Arc<dyn Clock>, path: &Path) -> Result<Self, ServerError> {
        let existing = if path.exists() { read_log(path)? } else { Vec::new() };
        tracing::info!(records = existing.len(), path = %path.display(), "opening fleet log");
        let writer = LogWriter::append_to(path, existing.len() as u64)?;
        Self::build(cfg, clock, existing, writer)
    }

    fn build(
        cfg: ServerConfig,
        clock: Arc<dyn Clock>,
        existing: Vec<LogRecord>,
        writer: LogWriter,
    ) -> Result<Self, ServerError> {
        cfg.validate()?;
        let st = FleetState::replay(cfg.relay_ttl, cfg.default_version_set.clone(), &existing);
        let server = FleetServer {
            telemetry: RwLock::new(st.telemetry),
            health: RwLock::new(st.health),
            permissions: RwLock::new(st.permissions),
            relay: RwLock::new(st.relay),
            versions: RwLock::new(st.versions),
            log: Mutex::new(writer),
            clock,
            cfg,
        };
        for set in server.cfg.version_sets.clone() {
            server.register_version_set(set)?;
        }
        Ok(server)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    fn commit(&self, rec: &LogRecord) -> Result<(), LogError> {
        lock(&self.log).append(rec)
    }

    pub fn ingest_telemetry(&self, rec: TelemetryRecord) -> Result<TelemetryAck, ServerError> {
        rec.validate()?;
        let mut idx = write(&self.telemetry);
        let (vin, t) = (rec.vin.clone(), rec.t);
        let rec = LogRecord::Telemetry(rec);
        self.commit(&rec)?;
        let stale = match &rec {
            LogRecord::Telemetry(r) => idx.apply(r),
            _ => false,
        };
        Ok(TelemetryAck { vin, t, stale })
    }

    pub fn ingest_health(&self, h: HealthReport) -> Result<Ack, ServerError> {
        h.validate()?;
        let mut idx = write(&self.health);
        let rec = LogRecord::Health(h);
        self.commit(&rec)?;
        if let LogRecord::Health(h) = &rec {
            idx.apply(h);
        }
        Ok(Ack { ok: true })
    }

    pub fn set_whitelist(&self, vin: &Vin, whitelisted: bool) -> Result<WhitelistState, ServerError> {
        check_vin(vin)?;
        let mut p = write(&self.permissions);
        self.commit(&LogRecord::Whitelist {
            vin: vin.clone(),
            whitelisted,
            t: self.now(),
        })?;
        p.set_whitelist(vin, whitelisted);
        Ok(WhitelistState {
            vin: vin.clone(),
            whitelisted,
        })
    }

    pub fn get_whitelist(&self, vin: &Vin) -> WhitelistState {
        WhitelistState {
            vin: vin.clone(),
            whitelisted: read(&self.permissions).whitelisted(vin),
        }
    }

    /// Records a heartbeat and returns the permission verdict at the current clock.
    pub fn record_heartbeat(&self, req: &HeartbeatRequest) -> Result<HeartbeatResponse, ServerError> {
        check_vin(&req.vin)?;
        if !req.t.is_finite() {
            return Err(ValidationError {
                kind: "heartbeat",
                reason: format!("t must be finite, got {}", req.t),
            }
            .into());
        }
        let mut p = write(&self.permissions);
        if let Some(&last) = p.last_heartbeat.get(&req.vin) {
            if req.t < last {
                return Err(ServerError::HeartbeatRegressed {
                    vin: req.vin.clone(),
                    t: req.t,
                    last,
                });
            }
        }
        self.commit(&LogRecord::Heartbeat {
            vin: req.vin.clone(),
            t: req.t,
        })?;
        p.record_heartbeat(&req.vin, req.t);
        Ok(HeartbeatResponse {
            vin: req.vin.clone(),
            t: req.t,
            whitelisted: p.whitelisted(&req.vin),
            allowed: p.allowed(&req.vin, self.now(), self.cfg.heartbeat_timeout),
        })
    }

    pub fn control_allowed(&self, vin: &Vin) -> bool {
        self.control_allowed_at(vin, self.now())
    }

    pub fn control_allowed_at(&self, vin: &Vin, now: f64) -> bool {
        read(&self.permissions).allowed(vin, now, self.cfg.heartbeat_timeout)
    }

    pub fn publish_measurement(&self, m: RelayMeasurement) -> Result<Ack, ServerError> {
        m.validate()?;
        let mut idx = write(&self.relay);
        let rec = LogRecord::Relay(m);
        self.commit(&rec)?;
        if let LogRecord::Relay(m) = &rec {
            idx.apply(m);
        }
        Ok(Ack { ok: true })
    }

    pub fn query_measurements(&self, q: &RelayQuery) -> Result<Vec<RelayMeasurement>, ServerError> {
        if q.mm_lo > q.mm_hi {
            return Err(ServerError::InvertedRange { lo: q.mm_lo, hi: q.mm_hi });
        }
        q.validate()?;
        Ok(read(&self.relay).query(q.mm_lo, q.mm_hi, q.max_age, self.now()))
    }

    /// Registers or replaces a version set. Identical re-registration is not logged.
    pub fn register_version_set(&self, set: VersionSet) -> Result<(), ServerError> {
        if set.id.trim().is_empty() {
            return Err(ServerError::Config("version set id must not be empty".into()));
        }
        let mut v = write(&self.versions);
        if v.sets.get(&set.id) == Some(&set) {
            return Ok(());
        }
        let rec = LogRecord::VersionSet(set);
        self.commit(&rec)?;
        if let LogRecord::VersionSet(s) = &rec {
            v.register(s);
        }
        Ok(())
    }

    pub fn version_sets(&self) -> Vec<VersionSet> {
        read(&self.versions).sets.values().cloned().collect()
    }

    pub fn assign_version(&self, vin: &Vin, set_id: &str) -> Result<VersionAssignment, ServerError> {
        check_vin(vin)?;
        let mut v = write(&self.versions);
        if !v.sets.contains_key(set_id) {
            return Err(ServerError::UnknownVersionSet(set_id.to_owned()));
        }
        self.commit(&LogRecord::Assignment {
            vin: vin.clone(),
            version_set_id: set_id.to_owned(),
            t: self.now(),
        })?;
        v.assign(vin, set_id);
        Ok(assignment(&v, vin))
    }

    pub fn get_assignment(&self, vin: &Vin) -> VersionAssignment {
        assignment(&read(&self.versions), vin)
    }

    pub fn fleet_snapshot(&self) -> Vec<FleetEntry> {
        self.fleet_snapshot_at(self.now())
    }

    pub fn fleet_snapshot_at(&self, now: f64) -> Vec<FleetEntry> {
        let tel = read(&self.telemetry);
        let health = read(&self.health);
        let perm = read(&self.permissions);
        let versions = read(&self.versions);
        tel.latest
            .values()
            .map(|rec| {
                let staleness = now - rec.t;
                let h = health.latest.get(&rec.vin);
                FleetEntry {
                    telemetry: rec.clone(),
                    staleness,
                    stale: staleness > self.cfg.staleness_threshold,
                    whitelisted: perm.whitelisted(&rec.vin),
                    allow: perm.allowed(&rec.vin, now, self.cfg.heartbeat_timeout),
                    version_set_id: versions.assigned_set(&rec.vin).to_owned(),
                    low_battery: h.is_some_and(|h| h.battery_voltage < self.cfg.low_battery_voltage),
                    version_mismatch: h.is_some_and(|h| versions.version_mismatch(&rec.vin, &h.software_version_hashes)),
                    battery_voltage: h.map(|h| h.battery_voltage),
                }
            })
            .collect()
    }

    /// Consistent copy of every store.
    pub fn state(&self) -> FleetState {
        let telemetry = read(&self.telemetry);
        let health = read(&self.health);
        let permissions = read(&self.permissions);
        let relay = read(&self.relay);
        let versions = read(&self.versions);
        FleetState {
            telemetry: telemetry.clone(),
            health: health.clone(),
            permissions: permissions.clone(),
            relay: relay.clone(),
            versions: versions.clone(),
        }
    }

    pub fn log_len(&self) -> u64 {
        lock(&self.log).len()
    }

    /// Parsed records of an in-memory log; `None` when file-backed.
    pub fn memory_log(&self) -> Option<Vec<LogRecord>> {
        lock(&self.log).memory_lines().map(|lines| {
            lines
                .iter()
                .map(|l| serde_json::from_str(l).expect("log lines are written by this process"))
                .collect()
        })
    }

    pub fn sync_log(&self) -> Result<(), ServerError> {
        Ok(lock(&self.log).sync()?)
    }
}

fn assignment(v: &Versions, vin: &Vin) -> VersionAssignment {
    let id = v.assigned_set(vin);
    let set = v.sets.get(id);
    VersionAssignment {
        vin: vin.clone(),
        version_set_id: id.to_owned(),
        hashes: set.map(|s| s.hashes.clone()).unwrap_or_default(),
        controller: set.map(|s| s.controller.clone()).unwrap_or_default(),
    }
}
