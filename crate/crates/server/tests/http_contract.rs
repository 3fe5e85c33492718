use std::sync::Arc;

use cavfleet_core::wire::{
    Ack, AssignmentUpdate, ErrorBody, FleetEntry, HealthReport, HeartbeatRequest, HeartbeatResponse,
    RelayMeasurement, RepoHash, TelemetryAck, TelemetryRecord, VersionAssignment, VersionSet, WhitelistState,
    WhitelistUpdate,
};
use cavfleet_core::Vin;
use cavfleet_server::{read_log, serve, FleetServer, FleetState, ManualClock, ServerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;

struct Harness {
    base: String,
    http: reqwest::Client,
    clock: Arc<ManualClock>,
    server: Arc<FleetServer>,
}

fn config() -> ServerConfig {
    ServerConfig {
        relay_ttl: 1e6,
        version_sets: vec![
            VersionSet {
                id: "stock".into(),
                hashes: vec![RepoHash::new("libpanda", "aaa")],
                controller: "stock".into(),
            },
            VersionSet {
                id: "A".into(),
                hashes: vec![RepoHash::new("libpanda", "bbb"), RepoHash::new("controller", "a1")],
                controller: "smoothing".into(),
            },
            VersionSet {
                id: "B".into(),
                hashes: vec![RepoHash::new("libpanda", "bbb"), RepoHash::new("controller", "b1")],
                controller: "setpoint".into(),
            },
        ],
        ..ServerConfig::default()
    }
}

async fn start(server: FleetServer, clock: Arc<ManualClock>) -> Harness {
    let server = Arc::new(server);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, server.clone()));
    Harness {
        base,
        http: reqwest::Client::new(),
        clock,
        server,
    }
}

async fn start_in_memory() -> Harness {
    let clock = Arc::new(ManualClock::new(0.0));
    let server = FleetServer::in_memory(config(), clock.clone()).unwrap();
    start(server, clock).await
}

fn telemetry(vin: &str, t: f64, mm: f64) -> TelemetryRecord {
    TelemetryRecord {
        vin: Vin::new(vin),
        t,
        mile_marker: mm,
        lane: 1,
        speed: 25.0,
        accel: 0.0,
        control_engaged: false,
        westbound: true,
        heading: None,
        commanded_speed: None,
    }
}

fn health(vin: &str, t: f64, volts: f64, hashes: Vec<RepoHash>) -> HealthReport {
    HealthReport {
        vin: Vin::new(vin),
        t,
        battery_voltage: volts,
        software_version_hashes: hashes,
        uptime: t,
        recording: true,
    }
}

impl Harness {
    fn url(&self, p: &str) -> String {
        format!("{}{}", self.base, p)
    }

    async fn post<B: serde::Serialize>(&self, p: &str, body: &B) -> reqwest::Response {
        self.http.post(self.url(p)).json(body).send().await.unwrap()
    }

    async fn put<B: serde::Serialize>(&self, p: &str, body: &B) -> reqwest::Response {
        self.http.put(self.url(p)).json(body).send().await.unwrap()
    }

    async fn get(&self, p: &str) -> reqwest::Response {
        self.http.get(self.url(p)).send().await.unwrap()
    }

    async fn relay(&self, lo: f64, hi: f64, max_age: f64) -> reqwest::Response {
        self.http
            .get(self.url("/relay"))
            .query(&[("mm_lo", lo), ("mm_hi", hi), ("max_age", max_age)])
            .send()
            .await
            .unwrap()
    }

    async fn heartbeat(&self, vin: &str, t: f64) -> reqwest::Response {
        self.post("/heartbeat", &HeartbeatRequest { vin: Vin::new(vin), t }).await
    }

    async fn fleet(&self) -> Vec<FleetEntry> {
        let r = self.get("/fleet").await;
        assert_eq!(r.status(), StatusCode::OK);
        r.json().await.unwrap()
    }
}

#[tokio::test]
async fn every_endpoint_round_trips() {
    let h = start_in_memory().await;

    // POST /telemetry
    let ack: TelemetryAck = h.post("/telemetry", &telemetry("V1", 1.0, 2.0)).await.json().await.unwrap();
    assert_eq!((ack.vin.as_str(), ack.t, ack.stale), ("V1", 1.0, false));
    let ack: TelemetryAck = h.post("/telemetry", &telemetry("V1", 0.5, 2.1)).await.json().await.unwrap();
    assert!(ack.stale);

    // POST /health
    let r = h.post("/health", &health("V1", 1.0, 12.6, vec![RepoHash::new("libpanda", "aaa")])).await;
    assert_eq!(r.status(), StatusCode::OK);
    assert!(r.json::<Ack>().await.unwrap().ok);

    // GET and PUT /whitelist/{vin}
    let w: WhitelistState = h.get("/whitelist/V1").await.json().await.unwrap();
    assert!(!w.whitelisted);
    let w: WhitelistState = h.put("/whitelist/V1", &WhitelistUpdate { whitelisted: true }).await.json().await.unwrap();
    assert!(w.whitelisted);
    let w: WhitelistState = h.get("/whitelist/V1").await.json().await.unwrap();
    assert_eq!(w, WhitelistState { vin: Vin::new("V1"), whitelisted: true });

    // POST /heartbeat
    h.clock.set(1.0);
    let hb: HeartbeatResponse = h.heartbeat("V1", 1.0).await.json().await.unwrap();
    assert!(hb.whitelisted && hb.allowed);

    // GET /fleet
    let fleet = h.fleet().await;
    assert_eq!(fleet.len(), 1);
    let e = &fleet[0];
    assert_eq!(e.telemetry, telemetry("V1", 1.0, 2.0));
    assert_eq!(e.staleness, 0.0);
    assert!(e.allow && e.whitelisted && !e.stale && !e.low_battery && !e.version_mismatch);
    assert_eq!(e.version_set_id, "stock");
    assert_eq!(e.battery_voltage, Some(12.6));

    // POST and GET /relay
    let m = RelayMeasurement {
        source_vin: Vin::new("V1"),
        t: 1.0,
        mile_marker: 2.0,
        lane: 1,
        speed: 24.0,
        westbound: true,
    };
    assert!(h.post("/relay", &m).await.json::<Ack>().await.unwrap().ok);
    let got: Vec<RelayMeasurement> = h.relay(1.9, 2.1, 5.0).await.json().await.unwrap();
    assert_eq!(got, vec![m.clone()]);
    h.clock.set(7.0);
    let got: Vec<RelayMeasurement> = h.relay(1.9, 2.1, 5.0).await.json().await.unwrap();
    assert!(got.is_empty());

    // GET and PUT /assignment/{vin}
    let a: VersionAssignment = h.get("/assignment/V1").await.json().await.unwrap();
    assert_eq!((a.version_set_id.as_str(), a.controller.as_str()), ("stock", "stock"));
    let a: VersionAssignment = h
        .put("/assignment/V1", &AssignmentUpdate { version_set_id: "A".into() })
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(a.controller, "smoothing");
    let a: VersionAssignment = h
        .put("/assignment/V1", &AssignmentUpdate { version_set_id: "B".into() })
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(a.version_set_id, "B");
    let got: VersionAssignment = h.get("/assignment/V1").await.json().await.unwrap();
    assert_eq!(got, a);

    // Reported hashes now differ from the assigned set.
    let fleet = h.fleet().await;
    assert!(fleet[0].version_mismatch);
    assert!(fleet[0].stale, "6 s since the last telemetry");
    assert!(!fleet[0].allow, "heartbeat lapsed");
}

#[tokio::test]
async fn errors_are_json_with_the_right_status() {
    let h = start_in_memory().await;

    let mut bad = telemetry("V1", 1.0, 2.0);
    bad.speed = -1.0;
    let r = h.post("/telemetry", &bad).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json::<ErrorBody>().await.unwrap().error.contains("speed"));

    let r = h.post("/telemetry", &serde_json::json!({"vin": "V1"})).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    r.json::<ErrorBody>().await.unwrap();

    let r = h.post("/health", &health("", 1.0, 12.0, vec![])).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let r = h.relay(3.0, 2.0, 5.0).await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    r.json::<ErrorBody>().await.unwrap();
    let r = h.relay(1.0, 2.0, 0.0).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let r = h.get("/relay?mm_lo=1").await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    let r = h.put("/assignment/V1", &AssignmentUpdate { version_set_id: "nope".into() }).await;
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    r.json::<ErrorBody>().await.unwrap();

    assert_eq!(h.heartbeat("V1", 5.0).await.status(), StatusCode::OK);
    let r = h.heartbeat("V1", 4.0).await;
    assert_eq!(r.status(), StatusCode::CONFLICT);
    r.json::<ErrorBody>().await.unwrap();

    // Rejected requests never reach the log: only the single heartbeat did.
    let log = h.server.memory_log().unwrap();
    assert_eq!(log.iter().filter(|r| r.kind() != "version_set").count(), 1);
}

#[tokio::test]
async fn heartbeat_boundary_and_deny_by_default() {
    let h = start_in_memory().await;
    let timeout = h.server.config().heartbeat_timeout;

    // Never whitelisted: denied under any heartbeat timing.
    h.clock.set(10.0);
    let hb: HeartbeatResponse = h.heartbeat("V9", 10.0).await.json().await.unwrap();
    assert!(!hb.allowed && !hb.whitelisted);

    h.put("/whitelist/V1", &WhitelistUpdate { whitelisted: true }).await;
    h.clock.set(10.0);
    let hb: HeartbeatResponse = h.heartbeat("V1", 10.0).await.json().await.unwrap();
    assert!(hb.allowed);

    let allowed_at = |now: f64| {
        h.clock.set(now);
        h.server.control_allowed(&Vin::new("V1"))
    };
    assert!(allowed_at(10.0 + timeout));
    assert!(!allowed_at(10.0 + timeout + 1e-9));

    // Monotone between heartbeats: once denied, stays denied.
    let mut was = true;
    for k in 0..=200 {
        let now = 10.0 + k as f64 * 0.01;
        let a = allowed_at(now);
        assert!(was || !a, "allowed again at {now}");
        was = a;
    }

    // Fleet view agrees, and revoking the whitelist wins over a fresh heartbeat.
    h.post("/telemetry", &telemetry("V1", 12.0, 1.0)).await;
    h.clock.set(12.0);
    h.heartbeat("V1", 12.0).await;
    assert!(h.fleet().await[0].allow);
    h.put("/whitelist/V1", &WhitelistUpdate { whitelisted: false }).await;
    assert!(!h.fleet().await[0].allow);
    assert!(!h.server.control_allowed(&Vin::new("V1")));
}

fn random_measurement(rng: &mut ChaCha8Rng, k: usize) -> RelayMeasurement {
    RelayMeasurement {
        source_vin: Vin::new(format!("V{:03}", rng.random_range(0..100))),
        t: rng.random_range(0.0..600.0),
        // Coarse markers so closed-interval endpoints get exercised.
        mile_marker: if k.is_multiple_of(5) {
            rng.random_range(0..=50) as f64 / 10.0
        } else {
            rng.random_range(0.0..5.0)
        },
        lane: rng.random_range(1..=4),
        speed: rng.random_range(0.0..35.0),
        westbound: rng.random_bool(0.5),
    }
}

fn key(m: &RelayMeasurement) -> (String, u64, u64, u32, u64, bool) {
    (
        m.source_vin.0.clone(),
        m.t.to_bits(),
        m.mile_marker.to_bits(),
        m.lane,
        m.speed.to_bits(),
        m.westbound,
    )
}

#[tokio::test]
async fn relay_query_equals_brute_force_filter() {
    let h = start_in_memory().await;
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let all: Vec<RelayMeasurement> = (0..1000).map(|k| random_measurement(&mut rng, k)).collect();
    for m in &all {
        assert_eq!(h.post("/relay", m).await.status(), StatusCode::OK);
    }
    for trial in 0..60 {
        let a = rng.random_range(-0.5..5.5);
        let b = rng.random_range(-0.5..5.5);
        let (lo, hi) = if trial % 6 == 0 {
            let x = rng.random_range(0..=50) as f64 / 10.0;
            (x, x)
        } else {
            (f64::min(a, b), f64::max(a, b))
        };
        let max_age = rng.random_range(1.0..700.0);
        let now = rng.random_range(0.0..700.0);
        h.clock.set(now);
        let got: Vec<RelayMeasurement> = h.relay(lo, hi, max_age).await.json().await.unwrap();
        let mut got: Vec<_> = got.iter().map(key).collect();
        let mut want: Vec<_> = all
            .iter()
            .filter(|m| m.mile_marker >= lo && m.mile_marker <= hi && now - m.t <= max_age)
            .map(key)
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want, "window [{lo}, {hi}] max_age {max_age} now {now}");
    }
}

#[tokio::test]
async fn hundred_vins_sixty_records_each() {
    let h = start_in_memory().await;
    let before = h.server.log_len();
    for s in 0..60 {
        for v in 0..100 {
            let r = h.post("/telemetry", &telemetry(&format!("V{v:03}"), s as f64, 1.0 + s as f64 * 0.01)).await;
            assert_eq!(r.status(), StatusCode::OK);
        }
    }
    h.clock.set(59.0);
    let fleet = h.fleet().await;
    assert_eq!(fleet.len(), 100);
    assert!(fleet.iter().all(|e| e.telemetry.t == 59.0 && !e.stale));
    assert_eq!(h.server.log_len() - before, 6000);
}

#[tokio::test]
async fn staleness_battery_and_ab_partitions() {
    let h = start_in_memory().await;
    let stock = vec![RepoHash::new("libpanda", "aaa")];
    for v in 0..10 {
        let vin = format!("V{v}");
        h.post("/telemetry", &telemetry(&vin, 0.0, 1.0)).await;
        let set = if v % 2 == 0 { "A" } else { "B" };
        h.put(&format!("/assignment/{vin}"), &AssignmentUpdate { version_set_id: set.into() }).await;
        let volts = if v == 3 { 11.2 } else { 12.4 };
        h.post("/health", &health(&vin, 0.0, volts, stock.clone())).await;
    }
    h.post("/telemetry", &telemetry("V0", 4.0, 1.1)).await;
    h.clock.set(5.0 + 1e-6);
    let fleet = h.fleet().await;
    let part = |id: &str| fleet.iter().filter(|e| e.version_set_id == id).count();
    assert_eq!((part("A"), part("B")), (5, 5));
    for e in &fleet {
        assert_eq!(e.stale, e.telemetry.vin.as_str() != "V0", "{}", e.telemetry.vin);
        assert_eq!(e.low_battery, e.telemetry.vin.as_str() == "V3");
        assert!(e.version_mismatch);
    }
    // Matching hashes clear the mismatch flag.
    let a_hashes = config().version_sets[1].hashes.clone();
    h.post("/health", &health("V0", 1.0, 12.4, a_hashes)).await;
    let fleet = h.fleet().await;
    assert!(!fleet.iter().find(|e| e.telemetry.vin.as_str() == "V0").unwrap().version_mismatch);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn log_replay_reconstructs_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fleet.jsonl");
    let clock = Arc::new(ManualClock::new(0.0));
    let server = FleetServer::open(config(), clock.clone(), &path).unwrap();
    let h = Arc::new(start(server, clock.clone()).await);

    // Concurrent writers across every store.
    let mut tasks = Vec::new();
    for w in 0..8u64 {
        let h = h.clone();
        tasks.push(tokio::spawn(async move {
            let mut rng = ChaCha8Rng::seed_from_u64(w);
            let mut hb_t = 0.0;
            for k in 0..150 {
                let vin = format!("V{}", rng.random_range(0..12));
                match rng.random_range(0..7) {
                    0 => {
                        h.post("/telemetry", &telemetry(&vin, rng.random_range(0.0..100.0), rng.random_range(0.0..5.0)))
                            .await;
                    }
                    1 => {
                        h.post("/health", &health(&vin, rng.random_range(0.0..100.0), rng.random_range(10.0..13.0), vec![]))
                            .await;
                    }
                    2 => {
                        h.put(&format!("/whitelist/{vin}"), &WhitelistUpdate { whitelisted: rng.random_bool(0.6) })
                            .await;
                    }
                    3 => {
                        hb_t += rng.random_range(0.0..1.0);
                        // Some of these regress against other writers and get 409; that is fine.
                        h.heartbeat(&format!("W{w}-{vin}"), hb_t).await;
                    }
                    4 | 5 => {
                        h.post("/relay", &random_measurement(&mut rng, k)).await;
                    }
                    _ => {
                        let set = ["A", "B", "stock", "missing"][rng.random_range(0..4)];
                        h.put(&format!("/assignment/{vin}"), &AssignmentUpdate { version_set_id: set.into() })
                            .await;
                    }
                }
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }

    let live = h.server.state();
    let records = read_log(&path).unwrap();
    assert_eq!(records.len() as u64, h.server.log_len());
    let cfg = config();
    let replayed = FleetState::replay(cfg.relay_ttl, cfg.default_version_set.clone(), &records);
    assert_eq!(replayed, live);

    // Restart from the same file.
    let reopened = FleetServer::open(cfg, clock, &path).unwrap();
    assert_eq!(reopened.state(), live);
    assert_eq!(reopened.log_len(), records.len() as u64, "no duplicate version set records on restart");
}
