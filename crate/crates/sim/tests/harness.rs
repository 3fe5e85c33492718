use std::path::Path;

use cavfleet_core::{ArbitrationMode, HumanDriverParams, Vin};
use cavfleet_server::LogRecord;
use cavfleet_sim::{run, RunLog, ScenarioConfig, SimError, StateFrame};

const BASE: &str = r#"
name = "t"
seed = 1
dt = 0.1
state_log_every = 1

[corridor]
length_mi = 2.0
lane_count = 2
controlled_lanes = 1
testbed_start_mm = 0.0
testbed_end_mm = 2.0

[[routes]]
id = "r"
westbound_entry_mm = 2.0
westbound_exit_mm = 0.0

[protocol]
exchange_period = 0.1
health_period = 1.0

[[version_sets]]
id = "stock"
hashes = [{ repo = "libpanda", hash = "stock" }]
controller = "stock"

[[version_sets]]
id = "smooth"
hashes = [{ repo = "libpanda", hash = "smooth" }]
controller = "smoothing"

[[version_sets]]
id = "flat"
hashes = [{ repo = "libpanda", hash = "flat" }]
controller = "setpoint"

[controllers.smoothing]
kind = "smoothing"
window_ticks = 10
lookahead_mi = 0.5
max_slew = 0.05
min_speed = 0.0
max_speed = 22.0
"#;

fn scenario(duration: f64, extra: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(&format!("duration = {duration:?}\n{BASE}\n{extra}")).unwrap()
}

fn one_cav(set: &str) -> String {
    format!(
        r#"
[[vehicles]]
vin = "CAV1"
role = "cav"
route = "r"
lane = 1
arc_s = 0.1
speed = 20.0
[vehicles.cav]
set_speed = 25.0
version_set = "{set}"
"#
    )
}

fn modes_in(frames: &[StateFrame], vin: &str, lo: f64, hi: f64) -> Vec<ArbitrationMode> {
    frames
        .iter()
        .filter(|f| f.t >= lo && f.t <= hi)
        .map(|f| f.vehicles.iter().find(|v| v.vin.as_str() == vin).unwrap().mode)
        .collect()
}

fn all(modes: &[ArbitrationMode], m: ArbitrationMode) -> bool {
    !modes.is_empty() && modes.iter().all(|x| *x == m)
}

fn run_in(dir: &Path, cfg: &ScenarioConfig) -> RunLog {
    run(cfg, dir).unwrap();
    RunLog::open(dir).unwrap()
}

#[test]
fn zero_duration_run_has_no_telemetry_and_a_valid_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_in(dir.path(), &scenario(0.0, &one_cav("flat")));
    assert!(log.trajectories().unwrap().is_empty());
    assert!(log.states().unwrap().is_empty());
    let kinds: Vec<&str> = log.messages().unwrap().iter().map(LogRecord::kind).collect();
    assert!(!kinds.is_empty());
    assert!(kinds.iter().all(|k| matches!(*k, "version_set" | "whitelist" | "assignment")), "{kinds:?}");
}

#[test]
fn refuses_to_overwrite_a_run_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(0.0, &one_cav("flat"));
    run(&cfg, dir.path()).unwrap();
    assert!(matches!(run(&cfg, dir.path()), Err(SimError::Usage(_))));
}

#[test]
fn uniform_ring_without_noise_stays_at_equilibrium() {
    let p = HumanDriverParams::default();
    let (n, circumference) = (22usize, 260.0);
    let gap = circumference / n as f64 - p.vehicle_length;
    let (mut lo, mut hi) = (0.0, p.desired_speed - 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p.equilibrium_gap(mid) < gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v_eq = 0.5 * (lo + hi);
    let half = circumference / 2.0 / 1609.344;
    let cycle = 2.0 * half;
    let toml = format!(
        r#"
name = "ring"
seed = 3
dt = 0.1
duration = 300.0
state_log_every = 100
[corridor]
length_mi = 0.1
lane_count = 1
controlled_lanes = 1
testbed_end_mm = 0.1
[[routes]]
id = "ring"
westbound_entry_mm = {half:?}
westbound_exit_mm = 0.0
turnaround_length_mi = 0.0
[[groups]]
prefix = "H"
count = {n}
role = "human"
route = "ring"
lane = 1
arc_end = {cycle:?}
speed = {v_eq:?}
"#
    );
    let dir = tempfile::tempdir().unwrap();
    let report = run(&ScenarioConfig::from_toml_str(&toml).unwrap(), dir.path()).unwrap();
    assert_eq!(report.final_states.len(), n);
    for s in &report.final_states {
        assert!((s.speed - v_eq).abs() < 1e-6, "{} drifted to {}", s.vin, s.speed);
    }
}

#[test]
fn same_seed_same_bytes_and_seed_matters() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/ring.toml")).unwrap();
    let mut cfg = ScenarioConfig::from_toml_str(&text).unwrap();
    cfg.duration = 60.0;
    cfg.network.drop_probability = 0.1;
    cfg.network.latency_ticks = 2;
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    run(&cfg, dirs[0].path()).unwrap();
    run(&cfg, dirs[1].path()).unwrap();
    cfg.seed += 1;
    run(&cfg, dirs[2].path()).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    for f in ["scenario.snapshot", "messages.jsonl", "states.jsonl", "integrity.hash"] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f} differs between identical runs");
    }
    assert_ne!(read(&dirs[0], "states.jsonl"), read(&dirs[2], "states.jsonl"));
}

#[test]
fn tampered_or_truncated_logs_fail_integrity() {
    let dir = tempfile::tempdir().unwrap();
    run(&scenario(5.0, &one_cav("flat")), dir.path()).unwrap();
    RunLog::open(dir.path()).unwrap();

    let msgs = dir.path().join("messages.jsonl");
    let bytes = std::fs::read(&msgs).unwrap();
    std::fs::write(&msgs, &bytes[..bytes.len() - 7]).unwrap();
    assert!(matches!(RunLog::open(dir.path()), Err(SimError::Integrity(_))));
    std::fs::write(&msgs, &bytes).unwrap();
    RunLog::open(dir.path()).unwrap();

    let states = dir.path().join("states.jsonl");
    let mut s = std::fs::read(&states).unwrap();
    s[10] ^= 1;
    std::fs::write(&states, &s).unwrap();
    assert!(matches!(RunLog::open(dir.path()), Err(SimError::Integrity(_))));

    std::fs::remove_file(dir.path().join("integrity.hash")).unwrap();
    assert!(RunLog::open(dir.path()).is_err());
}

#[test]
fn replayed_server_state_matches_live() {
    let events = r#"
[[events]]
t = 3.0
action = "whitelist"
vin = "CAV1"
value = false
[[events]]
t = 4.0
action = "assign"
vin = "CAV1"
version_set = "smooth"
"#;
    let extra = format!("{}{}", one_cav("flat"), events);
    let dir = tempfile::tempdir().unwrap();
    let report = run(&scenario(8.0, &extra), dir.path()).unwrap();
    let log = RunLog::open(dir.path()).unwrap();
    let replayed = log.server_state().unwrap();
    assert_eq!(replayed, report.server_state);
    assert!(!replayed.permissions.whitelisted(&"CAV1".into()));
    assert_eq!(replayed.versions.assigned_set(&"CAV1".into()), "smooth");

    // The telemetry index keeps the newest record of each trajectory.
    let traj = log.trajectories().unwrap();
    for (vin, recs) in &traj {
        assert_eq!(replayed.telemetry.latest.get(vin), recs.last());
    }
    assert_eq!(replayed.telemetry.records_seen as usize, traj.values().map(Vec::len).sum::<usize>());
}

#[test]
fn whitelist_revocation_drops_to_stock_acc_and_back() {
    let events = r#"
[[events]]
t = 5.0
action = "whitelist"
vin = "CAV1"
value = false
[[events]]
t = 10.0
action = "whitelist"
vin = "CAV1"
value = true
"#;
    let dir = tempfile::tempdir().unwrap();
    let log = run_in(dir.path(), &scenario(15.0, &format!("{}{}", one_cav("flat"), events)));
    let f = log.states().unwrap();
    assert!(all(&modes_in(&f, "CAV1", 1.0, 4.9), ArbitrationMode::Experimental));
    assert!(all(&modes_in(&f, "CAV1", 5.3, 9.9), ArbitrationMode::StockAcc));
    assert!(all(&modes_in(&f, "CAV1", 10.3, 15.0), ArbitrationMode::Experimental));
    // Commanded speed is recorded only under experimental control.
    for fr in &f {
        let v = &fr.vehicles[0];
        assert_eq!(v.commanded_speed.is_some(), v.mode == ArbitrationMode::Experimental);
    }
}

#[test]
fn uplink_stall_expires_the_heartbeat() {
    let events = r#"
[[events]]
t = 5.0
action = "network_stall"
vin = "CAV1"
duration = 3.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let log = run_in(dir.path(), &scenario(12.0, &format!("{}{}", one_cav("flat"), events)));
    let f = log.states().unwrap();
    assert!(all(&modes_in(&f, "CAV1", 1.0, 5.0), ArbitrationMode::Experimental));
    // Heartbeat timeout 0.5 s.
    assert!(all(&modes_in(&f, "CAV1", 5.7, 8.0), ArbitrationMode::StockAcc));
    assert!(all(&modes_in(&f, "CAV1", 8.3, 12.0), ArbitrationMode::Experimental));
    // No telemetry leaves the vehicle while stalled.
    let traj = log.trajectories().unwrap();
    assert!(traj.values().flatten().all(|r| !(r.t > 5.0 && r.t < 8.0)));
}

#[test]
fn latched_lapse_needs_the_driver_to_reengage() {
    let extra = format!(
        "{}{}",
        one_cav("flat"),
        r#"
[[events]]
t = 5.0
action = "network_stall"
vin = "CAV1"
duration = 2.0
[[events]]
t = 10.0
action = "disengage"
vin = "CAV1"
[[events]]
t = 11.0
action = "engage"
vin = "CAV1"
"#
    );
    let mut cfg = scenario(14.0, &extra);
    cfg.protocol.timing.latch_on_heartbeat_lapse = true;
    let dir = tempfile::tempdir().unwrap();
    let f = run_in(dir.path(), &cfg).states().unwrap();
    assert!(all(&modes_in(&f, "CAV1", 5.7, 9.9), ArbitrationMode::StockAcc));
    assert!(all(&modes_in(&f, "CAV1", 10.2, 10.9), ArbitrationMode::Disengaged));
    assert!(all(&modes_in(&f, "CAV1", 11.3, 14.0), ArbitrationMode::Experimental));
}

#[test]
fn silent_controller_hands_back_to_stock_acc() {
    let events = r#"
[[events]]
t = 5.0
action = "controller_stall"
vin = "CAV1"
duration = 3.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let f = run_in(dir.path(), &scenario(12.0, &format!("{}{}", one_cav("smooth"), events)))
        .states()
        .unwrap();
    assert!(all(&modes_in(&f, "CAV1", 5.7, 8.0), ArbitrationMode::StockAcc));
    assert!(all(&modes_in(&f, "CAV1", 8.3, 12.0), ArbitrationMode::Experimental));
}

#[test]
fn reassignment_takes_effect_at_reboot() {
    let extra = format!(
        "{}{}",
        one_cav("flat"),
        r#"
[[events]]
t = 5.0
action = "assign"
vin = "CAV1"
version_set = "smooth"
[[events]]
t = 8.0
action = "reboot"
vin = "CAV1"
"#
    );
    let dir = tempfile::tempdir().unwrap();
    let log = run_in(dir.path(), &scenario(16.0, &extra));

    let state = log.server_state().unwrap();
    let vin = "CAV1".into();
    let mut reports = 0;
    for rec in log.messages().unwrap() {
        if let LogRecord::Health(h) = rec {
            reports += 1;
            let booted = &h.software_version_hashes[0].hash;
            assert_eq!(booted, if h.t < 8.0 { "flat" } else { "smooth" }, "t={}", h.t);
            // Against the final assignment, only the pre-reboot reports mismatch.
            assert_eq!(state.versions.version_mismatch(&vin, &h.software_version_hashes), h.t < 8.0);
        }
    }
    assert!(reports >= 10);

    // The setpoint arm commands the set speed. The smoothing arm starts from
    // the current speed and slews down to its cap at 0.05 m/s per tick.
    let f = log.states().unwrap();
    let mut prev: Option<f64> = None;
    for fr in f.iter().filter(|fr| fr.t > 1.0) {
        let cmd = fr.vehicles[0].commanded_speed.unwrap();
        if fr.t <= 8.0 {
            assert_eq!(cmd, 25.0);
        } else {
            let p = prev.unwrap_or(cmd);
            assert!(cmd < 25.0 && cmd <= p && p - cmd <= 0.05 + 1e-9, "t={} cmd={cmd}", fr.t);
            if fr.t >= 14.0 {
                assert!(cmd <= 22.0 + 1e-9, "t={} cmd={cmd}", fr.t);
            }
            prev = Some(cmd);
        }
    }
}

#[test]
fn a_b_partition_runs_different_controllers() {
    let extra = r#"
[[groups]]
prefix = "A"
count = 3
role = "cav"
route = "r"
lane = 1
speed = 20.0
[groups.cav]
set_speed = 25.0
version_set = "smooth"

[[groups]]
prefix = "B"
count = 3
role = "cav"
route = "r"
lane = 1
arc_start = 0.3
arc_end = 4.3
speed = 20.0
[groups.cav]
set_speed = 25.0
version_set = "flat"
"#;
    let dir = tempfile::tempdir().unwrap();
    let log = run_in(dir.path(), &scenario(10.0, extra));
    let state = log.server_state().unwrap();
    for i in 1..=3 {
        assert_eq!(state.versions.assigned_set(&Vin::new(format!("A{i:03}"))), "smooth");
        assert_eq!(state.versions.assigned_set(&Vin::new(format!("B{i:03}"))), "flat");
    }
    let last = log.states().unwrap().pop().unwrap();
    for v in &last.vehicles {
        let cmd = v.commanded_speed.expect("engaged and whitelisted");
        if v.vin.as_str().starts_with('A') {
            assert!(cmd <= 22.0 + 1e-9);
        } else {
            assert_eq!(cmd, 25.0);
        }
    }
}

#[test]
fn rear_end_collision_is_reported() {
    let extra = r#"
[[vehicles]]
vin = "LEAD"
role = "human"
route = "r"
lane = 2
arc_s = 0.102
speed = 0.0

[[vehicles]]
vin = "FOLLOW"
role = "human"
route = "r"
lane = 2
arc_s = 0.1
speed = 30.0
"#;
    let dir = tempfile::tempdir().unwrap();
    match run(&scenario(10.0, extra), dir.path()) {
        Err(SimError::Collision { follower, leader, .. }) => {
            assert_eq!(follower.as_str(), "FOLLOW");
            assert_eq!(leader.as_str(), "LEAD");
        }
        other => panic!("expected a collision, got {other:?}"),
    }
}
