//! In-memory indexes. Every store is a pure fold over its log records, so
//! replaying the log rebuilds the same state.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use cavfleet_core::wire::{HealthReport, RelayMeasurement, RepoHash, TelemetryRecord, VersionSet};
use cavfleet_core::Vin;

use crate::log::LogRecord;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetryIndex {
    pub latest: BTreeMap<Vin, TelemetryRecord>,
    pub records_seen: u64,
}

impl TelemetryIndex {
    /// Returns true when the record was stale (not newer than the indexed one).
    pub fn apply(&mut self, rec: &TelemetryRecord) -> bool {
        self.records_seen += 1;
        match self.latest.get(&rec.vin) {
            Some(cur) if rec.t <= cur.t => true,
            _ => {
                self.latest.insert(rec.vin.clone(), rec.clone());
                false
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HealthIndex {
    pub latest: BTreeMap<Vin, HealthReport>,
}

impl HealthIndex {
    pub fn apply(&mut self, h: &HealthReport) {
        match self.latest.get(&h.vin) {
            Some(cur) if h.t < cur.t => {}
            _ => {
                self.latest.insert(h.vin.clone(), h.clone());
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Permissions {
    pub whitelist: BTreeMap<Vin, bool>,
    pub last_heartbeat: BTreeMap<Vin, f64>,
}

impl Permissions {
    pub fn whitelisted(&self, vin: &Vin) -> bool {
        self.whitelist.get(vin).copied().unwrap_or(false)
    }

    pub fn set_whitelist(&mut self, vin: &Vin, value: bool) {
        self.whitelist.insert(vin.clone(), value);
    }

    /// Callers reject regressing heartbeats before they reach the log;
    /// the max keeps replay of a hand-edited log well defined.
    pub fn record_heartbeat(&mut self, vin: &Vin, t: f64) {
        let e = self.last_heartbeat.entry(vin.clone()).or_insert(t);
        *e = e.max(t);
    }

    pub fn allowed(&self, vin: &Vin, now: f64, heartbeat_timeout: f64) -> bool {
        self.whitelisted(vin)
            && self
                .last_heartbeat
                .get(vin)
                .is_some_and(|&hb| cavfleet_core::arbitration::is_fresh(now - hb, heartbeat_timeout))
    }
}

/// Mile marker as a totally ordered map key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmKey(f64);

impl MmKey {
    pub fn new(mm: f64) -> Self {
        // Folds -0.0 into 0.0 so range bounds behave numerically.
        MmKey(mm + 0.0)
    }
}

impl Eq for MmKey {}

impl PartialOrd for MmKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MmKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayIndex {
    pub by_mm: BTreeMap<MmKey, Vec<RelayMeasurement>>,
    /// Measurements older than `newest_t - ttl` are dropped.
    pub ttl: f64,
    pub newest_t: f64,
    last_prune_t: f64,
    len: usize,
}

impl RelayIndex {
    pub fn new(ttl: f64) -> Self {
        RelayIndex {
            by_mm: BTreeMap::new(),
            ttl,
            newest_t: f64::NEG_INFINITY,
            last_prune_t: f64::NEG_INFINITY,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn apply(&mut self, m: &RelayMeasurement) {
        if m.t > self.newest_t {
            self.newest_t = m.t;
        }
        if m.t >= self.newest_t - self.ttl {
            self.by_mm.entry(MmKey::new(m.mile_marker)).or_default().push(m.clone());
            self.len += 1;
        }
        if self.newest_t - self.last_prune_t >= 0.25 * self.ttl {
            self.prune();
        }
    }

    fn prune(&mut self) {
        let cutoff = self.newest_t - self.ttl;
        let mut len = 0;
        self.by_mm.retain(|_, v| {
            v.retain(|m| m.t >= cutoff);
            len += v.len();
            !v.is_empty()
        });
        self.len = len;
        self.last_prune_t = self.newest_t;
    }

    /// Measurements with `mile_marker` in `[lo, hi]` and `now - t <= max_age`,
    /// ordered by mile marker then publication order.
    pub fn query(&self, lo: f64, hi: f64, max_age: f64, now: f64) -> Vec<RelayMeasurement> {
        let cutoff = self.newest_t - self.ttl;
        self.by_mm
            .range(MmKey::new(lo)..=MmKey::new(hi))
            .flat_map(|(_, v)| v.iter())
            .filter(|m| now - m.t <= max_age && m.t >= cutoff)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Versions {
    pub sets: BTreeMap<String, VersionSet>,
    pub assignments: BTreeMap<Vin, String>,
    pub default_set: String,
}

impl Versions {
    pub fn new(default_set: impl Into<String>) -> Self {
        Versions {
            sets: BTreeMap::new(),
            assignments: BTreeMap::new(),
            default_set: default_set.into(),
        }
    }

    pub fn register(&mut self, set: &VersionSet) {
        self.sets.insert(set.id.clone(), set.clone());
    }

    /// Assignments to unregistered sets are ignored; live callers validate first.
    pub fn assign(&mut self, vin: &Vin, set_id: &str) {
        if self.sets.contains_key(set_id) {
            self.assignments.insert(vin.clone(), set_id.to_owned());
        }
    }

    pub fn assigned_set(&self, vin: &Vin) -> &str {
        self.assignments.get(vin).map(String::as_str).unwrap_or(&self.default_set)
    }

    pub fn version_mismatch(&self, vin: &Vin, reported: &[RepoHash]) -> bool {
        let Some(set) = self.sets.get(self.assigned_set(vin)) else {
            return false;
        };
        let mut a: Vec<&RepoHash> = set.hashes.iter().collect();
        let mut b: Vec<&RepoHash> = reported.iter().collect();
        a.sort();
        b.sort();
        a != b
    }
}

/// Every store together. The live server holds each piece behind its own lock.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub telemetry: TelemetryIndex,
    pub health: HealthIndex,
    pub permissions: Permissions,
    pub relay: RelayIndex,
    pub versions: Versions,
}

impl FleetState {
    pub fn new(relay_ttl: f64, default_set: impl Into<String>) -> Self {
        FleetState {
            telemetry: TelemetryIndex::default(),
            health: HealthIndex::default(),
            permissions: Permissions::default(),
            relay: RelayIndex::new(relay_ttl),
            versions: Versions::new(default_set),
        }
    }

    pub fn apply(&mut self, rec: &LogRecord) {
        match rec {
            LogRecord::Telemetry(r) => {
                self.telemetry.apply(r);
            }
            LogRecord::Health(h) => self.health.apply(h),
            LogRecord::Whitelist { vin, whitelisted, .. } => self.permissions.set_whitelist(vin, *whitelisted),
            LogRecord::Heartbeat { vin, t } => self.permissions.record_heartbeat(vin, *t),
            LogRecord::Relay(m) => self.relay.apply(m),
            LogRecord::Assignment { vin, version_set_id, .. } => self.versions.assign(vin, version_set_id),
            LogRecord::VersionSet(s) => self.versions.register(s),
        }
    }

    pub fn replay<'a>(
        relay_ttl: f64,
        default_set: impl Into<String>,
        records: impl IntoIterator<Item = &'a LogRecord>,
    ) -> Self {
        let mut s = FleetState::new(relay_ttl, default_set);
        for r in records {
            s.apply(r);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(vin: &str, t: f64, mm: f64) -> RelayMeasurement {
        RelayMeasurement {
            source_vin: Vin::new(vin),
            t,
            mile_marker: mm,
            lane: 1,
            speed: 20.0,
            westbound: true,
        }
    }

    #[test]
    fn stale_telemetry_is_counted_not_indexed() {
        let mut idx = TelemetryIndex::default();
        let mk = |t| TelemetryRecord {
            vin: Vin::new("A"),
            t,
            mile_marker: 1.0,
            lane: 1,
            speed: 1.0,
            accel: 0.0,
            control_engaged: false,
            westbound: true,
            heading: None,
            commanded_speed: None,
        };
        assert!(!idx.apply(&mk(2.0)));
        assert!(idx.apply(&mk(1.0)));
        assert!(idx.apply(&mk(2.0)));
        assert_eq!(idx.latest[&Vin::new("A")].t, 2.0);
        assert_eq!(idx.records_seen, 3);
    }

    #[test]
    fn heartbeat_boundary_is_inclusive() {
        let mut p = Permissions::default();
        let v = Vin::new("A");
        p.set_whitelist(&v, true);
        assert!(!p.allowed(&v, 0.0, 0.5));
        p.record_heartbeat(&v, 10.0);
        assert!(p.allowed(&v, 10.5, 0.5));
        assert!(!p.allowed(&v, 10.5 + 1e-9, 0.5));
        p.set_whitelist(&v, false);
        assert!(!p.allowed(&v, 10.0, 0.5));
    }

    #[test]
    fn relay_range_is_closed_and_signed_zero_safe() {
        let mut r = RelayIndex::new(100.0);
        r.apply(&m("A", 0.0, -0.0));
        r.apply(&m("B", 0.0, 2.0));
        r.apply(&m("C", 0.0, 2.1));
        assert_eq!(r.query(0.0, 2.0, 10.0, 1.0).len(), 2);
        assert_eq!(r.query(2.0, 2.0, 10.0, 1.0)[0].source_vin, Vin::new("B"));
        assert!(r.query(0.0, 3.0, 0.5, 1.0).is_empty());
    }

    #[test]
    fn relay_ttl_bounds_retention() {
        let mut r = RelayIndex::new(10.0);
        for k in 0..100 {
            r.apply(&m("A", k as f64, 1.0));
        }
        assert!(r.len() <= 14, "{}", r.len());
        assert_eq!(r.query(0.0, 5.0, 1e9, 99.0).len(), 11);
    }

    #[test]
    fn version_mismatch_ignores_hash_order() {
        let mut v = Versions::new("base");
        let hashes = vec![RepoHash::new("a", "1"), RepoHash::new("b", "2")];
        v.register(&VersionSet {
            id: "base".into(),
            hashes: hashes.clone(),
            controller: "stock".into(),
        });
        let vin = Vin::new("X");
        let rev: Vec<RepoHash> = hashes.iter().rev().cloned().collect();
        assert!(!v.version_mismatch(&vin, &rev));
        assert!(v.version_mismatch(&vin, &hashes[..1]));
        v.assign(&vin, "missing");
        assert_eq!(v.assigned_set(&vin), "base");
    }
}
