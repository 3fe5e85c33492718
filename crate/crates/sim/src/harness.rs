//! Fixed-step simulation loop driving vehicles against an in-process fleet
//! server over HTTP.
//!
//! Per tick: operator events, state sampling, vehicle uplink (heartbeat,
//! relay publish and query, telemetry, health), delivery of due messages,
//! then control, arbitration and one dynamics step for every vehicle in
//! scenario order. All randomness comes from one seeded generator drawn in
//! that fixed order.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use cavfleet_core::traffic::find_leaders;
use cavfleet_core::units::miles_to_meters;
use cavfleet_core::wire::{HealthReport, RelayMeasurement, RelayQuery, RepoHash, TelemetryRecord};
use cavfleet_core::{
    idm_accel, step_vehicle, stock_acc_accel, AccParams, Arbiter, ArbitrationInputs, ArbitrationMode, ControlContext,
    ControllerCommand, Heading, HumanDriverParams, LeadObservation, LoopRoute, SpeedController, VehicleState, Vin,
};
use cavfleet_server::{serve_until, FleetServer, FleetState, ManualClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::client::FleetClient;
use crate::error::SimError;
use crate::runlog::{self, StateFrame, StatesWriter};
use crate::scenario::{period_ticks, CavSettings, EngagePolicy, EventAction, Role, ScenarioConfig};

#[derive(Debug, Clone)]
pub struct RunReport {
    pub ticks: u64,
    pub final_states: Vec<VehicleState>,
    /// Contents of `integrity.hash`.
    pub manifest: String,
    /// Server state as it stood when the run ended.
    pub server_state: FleetState,
}

/// Runs `cfg` and writes its run log into `out`, which must not already hold one.
pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport, SimError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| SimError::Io(out.display().to_string(), e))?;
    for name in [runlog::SNAPSHOT, runlog::MESSAGES, runlog::STATES, runlog::INTEGRITY] {
        if out.join(name).exists() {
            return Err(SimError::Usage(format!(
                "{} already contains a run log ({name})",
                out.display()
            )));
        }
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| SimError::Io("tokio runtime".into(), e))?;
    rt.block_on(run_async(cfg, out))
}

async fn run_async(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport, SimError> {
    let snap = out.join(runlog::SNAPSHOT);
    std::fs::write(&snap, cfg.snapshot()).map_err(|e| SimError::Io(snap.display().to_string(), e))?;

    let clock = Arc::new(ManualClock::new(0.0));
    let server = Arc::new(FleetServer::open(cfg.server_config(), clock.clone(), &out.join(runlog::MESSAGES))?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| SimError::Io("binding fleet server".into(), e))?;
    let addr = listener.local_addr().map_err(|e| SimError::Io("fleet server address".into(), e))?;
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let serving = tokio::spawn(serve_until(listener, server.clone(), async {
        let _ = stop_rx.await;
    }));

    let mut states = StatesWriter::create(out)?;
    let client = FleetClient::new(format!("http://{addr}"));
    let result = async {
        let mut sim = Sim::new(cfg, client, clock)?;
        sim.setup().await?;
        for k in 0..cfg.n_ticks() {
            sim.tick(k, &mut states).await?;
        }
        Ok::<_, SimError>(sim)
    }
    .await;

    let _ = stop_tx.send(());
    let _ = serving.await;
    server.sync_log()?;
    let server_state = server.state();
    drop(server);
    states.finish()?;
    let sim = result?;
    let manifest = runlog::write_integrity(out)?;
    Ok(RunReport {
        ticks: cfg.n_ticks(),
        final_states: sim.vehicles.into_iter().map(|v| v.state).collect(),
        manifest,
        server_state,
    })
}

#[derive(Debug)]
enum Uplink {
    Heartbeat { vehicle: usize, t: f64 },
    Publish(RelayMeasurement),
    Query { vehicle: usize, q: RelayQuery },
    Telemetry(TelemetryRecord),
    Health(HealthReport),
}

struct CavRuntime {
    settings: CavSettings,
    acc: AccParams,
    arbiter: Arbiter,
    controller: Option<Box<dyn SpeedController>>,
    booted_hashes: Vec<RepoHash>,
    boot_t: f64,
    whitelisted: bool,
    last_heartbeat_ack: Option<f64>,
    downstream: Vec<RelayMeasurement>,
    last_command: Option<ControllerCommand>,
    manual_engage: Option<bool>,
    network_stalled_until: f64,
    controller_stalled_until: f64,
}

struct Vehicle {
    state: VehicleState,
    route: usize,
    driver: HumanDriverParams,
    telemetry_start: f64,
    brake_until: f64,
    brake_decel: f64,
    cav: Option<CavRuntime>,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    client: FleetClient,
    clock: Arc<ManualClock>,
    rng: ChaCha8Rng,
    vehicles: Vec<Vehicle>,
    lengths: Vec<f64>,
    /// Events sorted by application tick, stable in file order.
    events: Vec<(u64, EventAction)>,
    next_event: usize,
    in_flight: VecDeque<(u64, Uplink)>,
    exchange_ticks: u64,
    telemetry_ticks: u64,
    health_ticks: u64,
}

/// Highest speed that still allows braking comfortably to the turnaround
/// speed limit before the connector, or the limit itself on it.
fn speed_cap(route: &LoopRoute, arc_s: f64, comfortable_decel: f64) -> f64 {
    if route.turnaround_length_mi <= 0.0 {
        return f64::INFINITY;
    }
    let limit = route.turnaround_speed_limit;
    match route.speed_limit_at(arc_s) {
        Some(l) => l,
        None => {
            let d = miles_to_meters(route.distance_to_turnaround(arc_s));
            (limit * limit + 2.0 * comfortable_decel * d).sqrt()
        }
    }
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, client: FleetClient, clock: Arc<ManualClock>) -> Result<Self, SimError> {
        let mut vehicles = Vec::with_capacity(cfg.vehicles.len());
        for spec in &cfg.vehicles {
            let route = cfg.routes.iter().position(|r| r.id == spec.route).expect("validated route");
            let pos = cfg.routes[route].position(spec.arc_s, spec.lane);
            let driver = spec.driver.clone().unwrap_or_else(|| cfg.human.params.clone());
            let cav = match (spec.role, &spec.cav) {
                (Role::Cav, Some(settings)) => Some(CavRuntime {
                    acc: settings.acc.resolve()?,
                    settings: settings.clone(),
                    arbiter: Arbiter::new(cfg.protocol.timing),
                    controller: None,
                    booted_hashes: Vec::new(),
                    boot_t: 0.0,
                    whitelisted: false,
                    last_heartbeat_ack: None,
                    downstream: Vec::new(),
                    last_command: None,
                    manual_engage: None,
                    network_stalled_until: f64::NEG_INFINITY,
                    controller_stalled_until: f64::NEG_INFINITY,
                }),
                _ => None,
            };
            vehicles.push(Vehicle {
                state: VehicleState::new(spec.vin.clone(), pos, spec.speed),
                route,
                driver,
                telemetry_start: spec.telemetry_start,
                brake_until: f64::NEG_INFINITY,
                brake_decel: 0.0,
                cav,
            });
        }
        let lengths = vehicles.iter().map(|v| v.driver.vehicle_length).collect();
        let mut events: Vec<(u64, EventAction)> = cfg
            .events
            .iter()
            .map(|e| (((e.t / cfg.dt) - 1e-9).ceil().max(0.0) as u64, e.action.clone()))
            .collect();
        events.sort_by_key(|(k, _)| *k);
        let p = &cfg.protocol;
        Ok(Sim {
            exchange_ticks: period_ticks("exchange_period", p.exchange_period, cfg.dt)?,
            telemetry_ticks: period_ticks("telemetry_period", p.telemetry_period, cfg.dt)?,
            health_ticks: period_ticks("health_period", p.health_period, cfg.dt)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            client,
            clock,
            vehicles,
            lengths,
            events,
            next_event: 0,
            in_flight: VecDeque::new(),
        })
    }

    fn index_of(&self, vin: &Vin) -> usize {
        self.vehicles
            .iter()
            .position(|v| &v.state.vin == vin)
            .expect("event VINs are validated")
    }

    /// Operator writes whitelist entries and assignments, then every CAV boots.
    async fn setup(&mut self) -> Result<(), SimError> {
        for i in 0..self.vehicles.len() {
            let Some(c) = &self.vehicles[i].cav else { continue };
            let vin = self.vehicles[i].state.vin.clone();
            let (wl, set) = (c.settings.whitelisted, c.settings.version_set.clone());
            self.client.set_whitelist(&vin, wl).await?;
            if let Some(set) = set {
                self.client.assign(&vin, &set).await?;
            }
        }
        for i in 0..self.vehicles.len() {
            if self.vehicles[i].cav.is_some() {
                self.boot(i, 0.0).await?;
            }
        }
        Ok(())
    }

    /// Fetches the assignment and instantiates the assigned controller.
    async fn boot(&mut self, i: usize, t: f64) -> Result<(), SimError> {
        let vin = self.vehicles[i].state.vin.clone();
        let a = self.client.get_assignment(&vin).await?;
        let controller = match self.cfg.controllers.get(&a.controller) {
            Some(spec) => Some(spec.build()),
            None if a.controller == "stock" => None,
            None => {
                tracing::warn!(%vin, controller = %a.controller, "unknown controller; running stock");
                None
            }
        };
        let c = self.vehicles[i].cav.as_mut().expect("only CAVs boot");
        c.controller = controller;
        c.booted_hashes = a.hashes;
        c.boot_t = t;
        c.last_command = None;
        Ok(())
    }

    async fn apply_events(&mut self, k: u64, t: f64) -> Result<(), SimError> {
        while self.next_event < self.events.len() && self.events[self.next_event].0 <= k {
            let action = self.events[self.next_event].1.clone();
            self.next_event += 1;
            let i = self.index_of(action.vin());
            let vin = action.vin().clone();
            match action {
                EventAction::Whitelist { value, .. } => {
                    self.client.set_whitelist(&vin, value).await?;
                }
                EventAction::Assign { version_set, .. } => {
                    self.client.assign(&vin, &version_set).await?;
                }
                EventAction::Reboot { .. } => self.boot(i, t).await?,
                EventAction::Engage { .. } => self.cav_mut(i).manual_engage = Some(true),
                EventAction::Disengage { .. } => self.cav_mut(i).manual_engage = Some(false),
                EventAction::NetworkStall { duration, .. } => self.cav_mut(i).network_stalled_until = t + duration,
                EventAction::ControllerStall { duration, .. } => {
                    self.cav_mut(i).controller_stalled_until = t + duration
                }
                EventAction::Brake { decel, duration, .. } => {
                    let v = &mut self.vehicles[i];
                    v.brake_until = t + duration;
                    v.brake_decel = decel;
                }
            }
        }
        Ok(())
    }

    fn cav_mut(&mut self, i: usize) -> &mut CavRuntime {
        self.vehicles[i].cav.as_mut().expect("CAV events are validated")
    }

    fn send(&mut self, k: u64, msg: Uplink) {
        let p = self.cfg.network.drop_probability;
        if p > 0.0 && self.rng.random::<f64>() < p {
            return;
        }
        self.in_flight.push_back((k + self.cfg.network.latency_ticks, msg));
    }

    fn uplink(&mut self, k: u64, t: f64) {
        let window = self.cfg.protocol.relay_window_mi;
        let max_age = self.cfg.protocol.relay_max_age;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let Some(c) = &v.cav else { continue };
            let s = &v.state;
            let mut out = Vec::new();
            if k.is_multiple_of(self.exchange_ticks) && t >= c.network_stalled_until {
                out.push(Uplink::Heartbeat { vehicle: i, t });
                out.push(Uplink::Publish(RelayMeasurement {
                    source_vin: s.vin.clone(),
                    t,
                    mile_marker: s.pos.mile_marker,
                    lane: s.pos.lane,
                    speed: s.speed,
                    westbound: s.pos.is_westbound(),
                }));
                let mm = s.pos.mile_marker;
                let q = match s.pos.heading {
                    Heading::Westbound => Some((mm - window, mm)),
                    Heading::Eastbound => Some((mm, mm + window)),
                    Heading::Turnaround => None,
                };
                if let Some((mm_lo, mm_hi)) = q {
                    out.push(Uplink::Query {
                        vehicle: i,
                        q: RelayQuery { mm_lo, mm_hi, max_age },
                    });
                }
            }
            let recording = t >= v.telemetry_start && t >= c.network_stalled_until;
            if recording && k.is_multiple_of(self.telemetry_ticks) {
                out.push(Uplink::Telemetry(TelemetryRecord {
                    vin: s.vin.clone(),
                    t,
                    mile_marker: s.pos.mile_marker,
                    lane: s.pos.lane,
                    speed: s.speed,
                    accel: s.accel,
                    control_engaged: s.mode == ArbitrationMode::Experimental,
                    westbound: s.pos.is_westbound(),
                    heading: Some(s.pos.heading),
                    commanded_speed: s.commanded_speed,
                }));
            }
            if recording && k.is_multiple_of(self.health_ticks) {
                out.push(Uplink::Health(HealthReport {
                    vin: s.vin.clone(),
                    t,
                    battery_voltage: c.settings.battery_voltage - c.settings.battery_drain_per_hour * t / 3600.0,
                    software_version_hashes: c.booted_hashes.clone(),
                    uptime: t - c.boot_t,
                    recording: true,
                }));
            }
            for m in out {
                self.send(k, m);
            }
        }
    }

    async fn deliver(&mut self, k: u64) -> Result<(), SimError> {
        while self.in_flight.front().is_some_and(|(due, _)| *due <= k) {
            let (_, msg) = self.in_flight.pop_front().expect("checked non-empty");
            match msg {
                Uplink::Heartbeat { vehicle, t } => {
                    let vin = self.vehicles[vehicle].state.vin.clone();
                    let r = self.client.heartbeat(&vin, t).await?;
                    let c = self.cav_mut(vehicle);
                    c.whitelisted = r.whitelisted;
                    c.last_heartbeat_ack = Some(c.last_heartbeat_ack.map_or(r.t, |x| x.max(r.t)));
                }
                Uplink::Publish(m) => {
                    self.client.publish(&m).await?;
                }
                Uplink::Query { vehicle, q } => {
                    let got = self.client.query(&q).await?;
                    self.cav_mut(vehicle).downstream = got;
                }
                Uplink::Telemetry(rec) => {
                    self.client.telemetry(&rec).await?;
                }
                Uplink::Health(h) => {
                    self.client.health(&h).await?;
                }
            }
        }
        Ok(())
    }

    async fn tick(&mut self, k: u64, states: &mut StatesWriter) -> Result<(), SimError> {
        let t = k as f64 * self.cfg.dt;
        self.clock.set(t);
        self.apply_events(k, t).await?;
        if k.is_multiple_of(self.cfg.state_log_every) {
            states.write(&StateFrame {
                tick: k,
                t,
                vehicles: self.vehicles.iter().map(|v| v.state.clone()).collect(),
            })?;
        }
        self.uplink(k, t);
        self.deliver(k).await?;
        self.control_and_step(k, t)
    }

    fn control_and_step(&mut self, k: u64, t: f64) -> Result<(), SimError> {
        let cfg = self.cfg;
        let snapshot: Vec<VehicleState> = self.vehicles.iter().map(|v| v.state.clone()).collect();
        let routes = &cfg.routes;
        let route_idx: Vec<usize> = self.vehicles.iter().map(|v| v.route).collect();
        let leaders = find_leaders(&snapshot, &self.lengths, |i| &routes[route_idx[i]]);
        for (i, l) in leaders.iter().enumerate() {
            if let Some(l) = l {
                if l.gap <= 0.0 {
                    return Err(SimError::Collision {
                        tick: k,
                        t,
                        follower: snapshot[i].vin.clone(),
                        leader: snapshot[l.index].vin.clone(),
                        gap: l.gap,
                    });
                }
            }
        }

        let sigma = cfg.human.noise_std;
        for (i, veh) in self.vehicles.iter_mut().enumerate() {
            let noise: f64 = if sigma > 0.0 {
                sigma * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let route = &routes[veh.route];
            let s = &snapshot[i];
            let (gap, lead_speed) = match leaders[i] {
                Some(l) => (l.gap, l.speed),
                None => (f64::INFINITY, s.speed),
            };
            let cap = speed_cap(route, s.pos.arc_s, veh.driver.comfortable_decel);
            let dyn_err = |source| SimError::Dynamics {
                vin: s.vin.clone(),
                source,
            };
            let human_accel = |p: &HumanDriverParams| -> Result<f64, SimError> {
                let mut p = p.clone();
                p.desired_speed = p.desired_speed.min(cap);
                let a = idm_accel(s.speed, gap, lead_speed, &p).map_err(dyn_err)?;
                Ok((a + noise).clamp(-p.hard_decel, p.max_accel))
            };

            let mut accel = match veh.cav.as_mut() {
                None => human_accel(&veh.driver)?,
                Some(c) => {
                    let engaged = c.manual_engage.unwrap_or(match c.settings.engage {
                        EngagePolicy::Always => true,
                        EngagePolicy::Westbound => s.pos.is_westbound(),
                        EngagePolicy::Never => false,
                    });
                    let lead = leaders[i]
                        .filter(|l| l.gap <= c.acc.sensor_range)
                        .map(|l| LeadObservation { gap: l.gap, speed: l.speed });
                    if t >= c.controller_stalled_until {
                        if let Some(ctrl) = c.controller.as_mut() {
                            let cmd = ctrl.command(&ControlContext {
                                ego: s,
                                lead,
                                downstream: &c.downstream,
                                now: t,
                                set_speed: c.settings.set_speed,
                            });
                            c.last_command = Some(cmd);
                        }
                    }
                    let inputs = ArbitrationInputs {
                        driver_engaged: engaged,
                        whitelisted: c.whitelisted,
                        heartbeat_age: c.last_heartbeat_ack.map_or(f64::INFINITY, |h| t - h),
                        command_age: c.last_command.map_or(f64::INFINITY, |cmd| t - cmd.issued_at),
                    };
                    let mode = c.arbiter.update(inputs);
                    let target = c.last_command.map(|cmd| cmd.target_speed);
                    veh.state.driver_engaged = engaged;
                    veh.state.set_mode(mode, target);
                    match mode {
                        ArbitrationMode::Disengaged => human_accel(&veh.driver)?,
                        ArbitrationMode::StockAcc => {
                            stock_acc_accel(s.speed, gap, lead_speed, c.settings.set_speed.min(cap), &c.acc)
                                .map_err(dyn_err)?
                        }
                        ArbitrationMode::Experimental => {
                            let set = target.expect("experimental mode has a command").min(cap);
                            stock_acc_accel(s.speed, gap, lead_speed, set, &c.acc).map_err(dyn_err)?
                        }
                    }
                }
            };
            if t < veh.brake_until {
                accel = -veh.brake_decel;
            }
            let next = step_vehicle(&veh.state, accel, cfg.dt, route).map_err(|source| SimError::Dynamics {
                vin: veh.state.vin.clone(),
                source,
            })?;
            veh.state = next;
        }
        Ok(())
    }
}
