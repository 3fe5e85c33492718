//! Scenario files: road geometry, fleet, protocol timings and operator events.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use cavfleet_core::wire::{RepoHash, VersionSet};
use cavfleet_core::{AccParams, ControllerSpec, Corridor, HumanDriverParams, LoopRoute, SmoothingParams, TimingConfig, Vin};
use cavfleet_server::ServerConfig;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Integration step, s.
    pub dt: f64,
    /// Simulated duration, s.
    pub duration: f64,
    /// Vehicle states are written every this many ticks.
    #[serde(default = "one")]
    pub state_log_every: u64,
    #[serde(default)]
    pub corridor: Corridor,
    pub routes: Vec<LoopRoute>,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub server: ServerTuning,
    #[serde(default)]
    pub human: HumanDefaults,
    /// Controller variants by name. `setpoint` and `smoothing` exist unless overridden.
    #[serde(default)]
    pub controllers: BTreeMap<String, ControllerSpec>,
    #[serde(default = "default_version_sets")]
    pub version_sets: Vec<VersionSet>,
    #[serde(default = "stock")]
    pub default_version_set: String,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

fn one() -> u64 {
    1
}

fn stock() -> String {
    "stock".into()
}

fn default_version_sets() -> Vec<VersionSet> {
    vec![VersionSet {
        id: stock(),
        hashes: vec![RepoHash::new("libpanda", "stock")],
        controller: "stock".into(),
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default = "ProtocolConfig::default_telemetry")]
    pub telemetry_period: f64,
    #[serde(default = "ProtocolConfig::default_health")]
    pub health_period: f64,
    /// Interval between heartbeat and relay round trips, s.
    #[serde(default = "ProtocolConfig::default_exchange")]
    pub exchange_period: f64,
    #[serde(default)]
    pub timing: TimingConfig,
    /// Oldest relayed measurement a vehicle asks for, s.
    #[serde(default = "ProtocolConfig::default_relay_age")]
    pub relay_max_age: f64,
    /// Length of the relay window ahead of the vehicle, miles.
    #[serde(default = "ProtocolConfig::default_relay_window")]
    pub relay_window_mi: f64,
}

impl ProtocolConfig {
    fn default_telemetry() -> f64 {
        1.0
    }
    fn default_health() -> f64 {
        12.0
    }
    fn default_exchange() -> f64 {
        0.1
    }
    fn default_relay_age() -> f64 {
        2.0
    }
    fn default_relay_window() -> f64 {
        0.5
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            telemetry_period: Self::default_telemetry(),
            health_period: Self::default_health(),
            exchange_period: Self::default_exchange(),
            timing: TimingConfig::default(),
            relay_max_age: Self::default_relay_age(),
            relay_window_mi: Self::default_relay_window(),
        }
    }
}

/// Simulated vehicle uplink. Lossless and immediate by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub drop_probability: f64,
    /// Delivery delay in ticks.
    #[serde(default)]
    pub latency_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerTuning {
    #[serde(default = "ServerTuning::default_staleness")]
    pub staleness_threshold: f64,
    #[serde(default = "ServerTuning::default_battery")]
    pub low_battery_voltage: f64,
    #[serde(default = "ServerTuning::default_ttl")]
    pub relay_ttl: f64,
}

impl ServerTuning {
    fn default_staleness() -> f64 {
        5.0
    }
    fn default_battery() -> f64 {
        11.5
    }
    fn default_ttl() -> f64 {
        30.0
    }
}

impl Default for ServerTuning {
    fn default() -> Self {
        ServerTuning {
            staleness_threshold: Self::default_staleness(),
            low_battery_voltage: Self::default_battery(),
            relay_ttl: Self::default_ttl(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanDefaults {
    #[serde(default)]
    pub params: HumanDriverParams,
    /// Standard deviation of the acceleration noise, m/s².
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Human,
    Cav,
}

/// When the driver of a CAV engages cruise control.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagePolicy {
    #[default]
    Always,
    /// Engaged on the westbound leg only.
    Westbound,
    /// Only through engage events.
    Never,
}

/// ACC parameters: a preset name or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AccChoice {
    Preset(String),
    Params(AccParams),
}

impl Default for AccChoice {
    fn default() -> Self {
        AccChoice::Preset("oem_a".into())
    }
}

impl AccChoice {
    pub fn resolve(&self) -> Result<AccParams, SimError> {
        match self {
            AccChoice::Preset(name) => {
                AccParams::preset(name).ok_or_else(|| SimError::Scenario(format!("unknown ACC preset {name:?}")))
            }
            AccChoice::Params(p) => Ok(p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavSettings {
    #[serde(default)]
    pub acc: AccChoice,
    /// Driver's cruise set speed, m/s.
    #[serde(default = "CavSettings::default_set_speed")]
    pub set_speed: f64,
    #[serde(default)]
    pub engage: EngagePolicy,
    /// Whitelist entry written by the operator before the run starts.
    #[serde(default = "yes")]
    pub whitelisted: bool,
    /// Version set assigned before the run starts; the server default otherwise.
    #[serde(default)]
    pub version_set: Option<String>,
    #[serde(default = "CavSettings::default_battery")]
    pub battery_voltage: f64,
    /// Battery voltage lost per simulated hour.
    #[serde(default)]
    pub battery_drain_per_hour: f64,
}

fn yes() -> bool {
    true
}

impl CavSettings {
    fn default_set_speed() -> f64 {
        30.0
    }
    fn default_battery() -> f64 {
        12.6
    }
}

impl Default for CavSettings {
    fn default() -> Self {
        CavSettings {
            acc: AccChoice::default(),
            set_speed: Self::default_set_speed(),
            engage: EngagePolicy::default(),
            whitelisted: true,
            version_set: None,
            battery_voltage: Self::default_battery(),
            battery_drain_per_hour: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub vin: Vin,
    pub role: Role,
    pub route: String,
    pub lane: u32,
    /// Initial position along the route cycle, miles.
    #[serde(default)]
    pub arc_s: f64,
    /// Initial speed, m/s.
    #[serde(default)]
    pub speed: f64,
    /// Driver model; the scenario's human defaults otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<HumanDriverParams>,
    /// Telemetry starts at this time, s.
    #[serde(default)]
    pub telemetry_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cav: Option<CavSettings>,
}

/// Generates `count` vehicles spaced evenly along `[arc_start, arc_end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    /// VINs are the prefix plus a zero-padded index starting at 1.
    pub prefix: String,
    pub count: usize,
    pub role: Role,
    pub route: String,
    pub lane: u32,
    #[serde(default)]
    pub arc_start: f64,
    /// Defaults to one full cycle after `arc_start`.
    #[serde(default)]
    pub arc_end: Option<f64>,
    #[serde(default)]
    pub speed: f64,
    #[serde(default)]
    pub driver: Option<HumanDriverParams>,
    #[serde(default)]
    pub telemetry_start: f64,
    /// Telemetry start of the i-th vehicle is delayed by `i * spread / count`.
    #[serde(default)]
    pub telemetry_start_spread: f64,
    #[serde(default)]
    pub cav: Option<CavSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    /// Simulated time, s. Applied at the first tick at or after it.
    pub t: f64,
    #[serde(flatten)]
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EventAction {
    /// Operator toggles the whitelist entry.
    Whitelist { vin: Vin, value: bool },
    /// Operator assigns a version set; takes effect at the next reboot.
    Assign { vin: Vin, version_set: String },
    Reboot { vin: Vin },
    Engage { vin: Vin },
    Disengage { vin: Vin },
    /// The vehicle's uplink goes silent.
    NetworkStall { vin: Vin, duration: f64 },
    /// The experimental controller stops issuing commands.
    ControllerStall { vin: Vin, duration: f64 },
    /// The driver brakes at `decel` (positive) regardless of the model.
    Brake { vin: Vin, decel: f64, duration: f64 },
}

impl EventAction {
    pub fn vin(&self) -> &Vin {
        match self {
            EventAction::Whitelist { vin, .. }
            | EventAction::Assign { vin, .. }
            | EventAction::Reboot { vin }
            | EventAction::Engage { vin }
            | EventAction::Disengage { vin }
            | EventAction::NetworkStall { vin, .. }
            | EventAction::ControllerStall { vin, .. }
            | EventAction::Brake { vin, .. } => vin,
        }
    }
}

/// Ticks per period, requiring the period to be a whole number of ticks.
pub fn period_ticks(name: &str, period: f64, dt: f64) -> Result<u64, SimError> {
    let n = (period / dt).round();
    if !(period > 0.0 && n >= 1.0 && ((n * dt) - period).abs() <= 1e-9 * period.max(1.0)) {
        return Err(SimError::Scenario(format!(
            "{name} ({period} s) must be a positive whole multiple of dt ({dt} s)"
        )));
    }
    Ok(n as u64)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))?;
        cfg.resolved()
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// Expands groups into vehicles, fills in built-in controllers, and validates.
    pub fn resolved(mut self) -> Result<Self, SimError> {
        let groups = std::mem::take(&mut self.groups);
        for g in &groups {
            let route = self
                .route(&g.route)
                .ok_or_else(|| SimError::Scenario(format!("group {:?} uses unknown route {:?}", g.prefix, g.route)))?;
            let end = g.arc_end.unwrap_or(g.arc_start + route.total_cycle_mi());
            for i in 0..g.count {
                let frac = i as f64 / g.count as f64;
                self.vehicles.push(VehicleSpec {
                    vin: Vin::new(format!("{}{:03}", g.prefix, i + 1)),
                    role: g.role,
                    route: g.route.clone(),
                    lane: g.lane,
                    arc_s: g.arc_start + frac * (end - g.arc_start),
                    speed: g.speed,
                    driver: g.driver.clone(),
                    telemetry_start: g.telemetry_start + frac * g.telemetry_start_spread,
                    cav: g.cav.clone(),
                });
            }
        }
        for v in &mut self.vehicles {
            if v.role == Role::Cav && v.cav.is_none() {
                v.cav = Some(CavSettings::default());
            }
        }
        self.controllers
            .entry("smoothing".into())
            .or_insert_with(|| ControllerSpec::Smoothing(SmoothingParams::default()));
        self.controllers.entry("setpoint".into()).or_insert(ControllerSpec::Setpoint);
        self.validate()?;
        Ok(self)
    }

    pub fn route(&self, id: &str) -> Option<&LoopRoute> {
        self.routes.iter().find(|r| r.id == id)
    }

    pub fn n_ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        if ((self.n_ticks() as f64) * self.dt - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
            return bad("duration must be a whole number of ticks".into());
        }
        if self.state_log_every == 0 {
            return bad("state_log_every must be at least 1".into());
        }
        self.corridor.validate().map_err(|e| SimError::Scenario(e.to_string()))?;
        let mut route_ids = BTreeSet::new();
        for r in &self.routes {
            r.validate(&self.corridor).map_err(|e| SimError::Scenario(e.to_string()))?;
            if !route_ids.insert(r.id.as_str()) {
                return bad(format!("duplicate route id {:?}", r.id));
            }
        }
        let p = &self.protocol;
        period_ticks("telemetry_period", p.telemetry_period, self.dt)?;
        period_ticks("health_period", p.health_period, self.dt)?;
        period_ticks("exchange_period", p.exchange_period, self.dt)?;
        for (name, v) in [
            ("heartbeat_timeout", p.timing.heartbeat_timeout),
            ("command_timeout", p.timing.command_timeout),
            ("relay_max_age", p.relay_max_age),
            ("relay_window_mi", p.relay_window_mi),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.network.drop_probability) {
            return bad("drop_probability must lie in [0, 1]".into());
        }
        self.human.params.validate().map_err(|e| SimError::Scenario(e.to_string()))?;
        if !(self.human.noise_std.is_finite() && self.human.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        for (name, spec) in &self.controllers {
            if let ControllerSpec::Smoothing(sp) = spec {
                sp.validate(self.human.params.comfortable_decel, self.dt)
                    .map_err(|e| SimError::Scenario(format!("controller {name:?}: {e}")))?;
            }
        }
        let set_ids: BTreeSet<&str> = self.version_sets.iter().map(|s| s.id.as_str()).collect();
        if set_ids.len() != self.version_sets.len() {
            return bad("duplicate version set id".into());
        }
        if !set_ids.contains(self.default_version_set.as_str()) {
            return bad(format!("default version set {:?} is not defined", self.default_version_set));
        }
        for s in &self.version_sets {
            if s.controller != "stock" && !self.controllers.contains_key(&s.controller) {
                return bad(format!("version set {:?} names unknown controller {:?}", s.id, s.controller));
            }
        }

        let mut vins = BTreeSet::new();
        let mut lane_route: BTreeMap<u32, &str> = BTreeMap::new();
        for v in &self.vehicles {
            if v.vin.0.trim().is_empty() {
                return bad("empty VIN".into());
            }
            if !vins.insert(&v.vin) {
                return bad(format!("duplicate VIN {}", v.vin));
            }
            if self.route(&v.route).is_none() {
                return bad(format!("{} uses unknown route {:?}", v.vin, v.route));
            }
            if v.lane == 0 || v.lane > self.corridor.lane_count {
                return bad(format!("{} is in lane {} outside 1..={}", v.vin, v.lane, self.corridor.lane_count));
            }
            // Car following is per (route, lane); two routes in one lane would overlap physically.
            if let Some(other) = lane_route.insert(v.lane, &v.route) {
                if other != v.route {
                    return bad(format!("lane {} carries routes {:?} and {:?}; one route per lane", v.lane, other, v.route));
                }
            }
            if !(v.arc_s.is_finite() && v.arc_s >= 0.0) || !(v.speed.is_finite() && v.speed >= 0.0) {
                return bad(format!("{} needs a non-negative arc_s and speed", v.vin));
            }
            if let Some(d) = &v.driver {
                d.validate().map_err(|e| SimError::Scenario(format!("{}: {e}", v.vin)))?;
            }
            match (v.role, &v.cav) {
                (Role::Human, Some(_)) => return bad(format!("human {} has CAV settings", v.vin)),
                (Role::Cav, Some(c)) => {
                    if !self.corridor.is_controlled_lane(v.lane) {
                        return bad(format!("CAV {} is in uncontrolled lane {}", v.vin, v.lane));
                    }
                    c.acc
                        .resolve()?
                        .validate()
                        .map_err(|e| SimError::Scenario(format!("{}: {e}", v.vin)))?;
                    if !(c.set_speed.is_finite() && c.set_speed > 0.0) {
                        return bad(format!("{}: set speed must be positive", v.vin));
                    }
                    if let Some(s) = &c.version_set {
                        if !set_ids.contains(s.as_str()) {
                            return bad(format!("{} assigned unknown version set {s:?}", v.vin));
                        }
                    }
                }
                (Role::Cav, None) | (Role::Human, None) => {}
            }
        }
        for e in &self.events {
            if !(e.t.is_finite() && e.t >= 0.0) {
                return bad(format!("event time must be non-negative, got {}", e.t));
            }
            let vin = e.action.vin();
            let Some(v) = self.vehicles.iter().find(|v| &v.vin == vin) else {
                return bad(format!("event refers to unknown VIN {vin}"));
            };
            let cav_only = !matches!(e.action, EventAction::Brake { .. });
            if cav_only && v.role != Role::Cav {
                return bad(format!("event {:?} needs a CAV, {vin} is human", e.action));
            }
            match &e.action {
                EventAction::Assign { version_set, .. } if !set_ids.contains(version_set.as_str()) => {
                    return bad(format!("event assigns unknown version set {version_set:?}"));
                }
                EventAction::NetworkStall { duration, .. } | EventAction::ControllerStall { duration, .. }
                    if !(duration.is_finite() && *duration >= 0.0) =>
                {
                    return bad("stall duration must be non-negative".into());
                }
                EventAction::Brake { decel, duration, .. }
                    if !(decel.is_finite() && *decel >= 0.0 && duration.is_finite() && *duration >= 0.0) =>
                {
                    return bad("brake needs non-negative decel and duration".into());
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            heartbeat_timeout: self.protocol.timing.heartbeat_timeout,
            staleness_threshold: self.server.staleness_threshold,
            low_battery_voltage: self.server.low_battery_voltage,
            relay_ttl: self.server.relay_ttl,
            default_version_set: self.default_version_set.clone(),
            version_sets: self.version_sets.clone(),
        }
    }

    /// Canonical JSON of the resolved scenario.
    pub fn snapshot(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| SimError::Scenario(format!("scenario snapshot: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
