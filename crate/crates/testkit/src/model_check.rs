//! Exhaustive enumeration of arbitration event sequences.
//!
//! The checker keeps its own record of the four predicates (driver engaged,
//! whitelisted, heartbeat fresh, command fresh) and compares it against the
//! mode the arbiter under test reports after every event.

use cavfleet_core::{Arbiter, ArbitrationInputs, ArbitrationMode, TimingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Engage,
    Disengage,
    WhitelistOn,
    WhitelistOff,
    HeartbeatArrive,
    HeartbeatLapse,
    CommandArrive,
    CommandLapse,
}

pub const EVENTS: [Event; 8] = [
    Event::Engage,
    Event::Disengage,
    Event::WhitelistOn,
    Event::WhitelistOff,
    Event::HeartbeatArrive,
    Event::HeartbeatLapse,
    Event::CommandArrive,
    Event::CommandLapse,
];

#[derive(Debug, Clone, Copy)]
struct Truth {
    engaged: bool,
    whitelisted: bool,
    heartbeat_age: f64,
    command_age: f64,
}

impl Truth {
    fn apply(mut self, e: Event, cfg: &TimingConfig) -> Self {
        match e {
            Event::Engage => self.engaged = true,
            Event::Disengage => self.engaged = false,
            Event::WhitelistOn => self.whitelisted = true,
            Event::WhitelistOff => self.whitelisted = false,
            Event::HeartbeatArrive => self.heartbeat_age = 0.0,
            Event::HeartbeatLapse => self.heartbeat_age = cfg.heartbeat_timeout * 1.5 + 1e-3,
            Event::CommandArrive => self.command_age = 0.0,
            Event::CommandLapse => self.command_age = cfg.command_timeout * 1.5 + 1e-3,
        }
        self
    }

    fn all_hold(&self, cfg: &TimingConfig) -> bool {
        self.engaged
            && self.whitelisted
            && self.heartbeat_age <= cfg.heartbeat_timeout
            && self.command_age <= cfg.command_timeout
    }
}

#[derive(Debug, Default, Clone)]
pub struct CheckReport {
    pub states_checked: u64,
    pub sequences: u64,
    pub safety_violation_count: u64,
    /// First few sequences that reached experimental mode with a predicate
    /// missing, or a non-disengaged mode without the driver.
    pub safety_violations: Vec<Vec<Event>>,
    /// All predicates held but the mode was not experimental (only
    /// reported when the arbiter does not latch).
    pub liveness_violations: Vec<Vec<Event>>,
    pub experimental_reached: bool,
    pub experimental_while_unwhitelisted: u64,
}

/// Visits every event sequence of length `1..=max_len` from a fresh arbiter.
pub fn check_arbiter(cfg: TimingConfig, max_len: usize) -> CheckReport {
    check_with(Arbiter::new(cfg), |a: &mut Arbiter, i| a.update(i), cfg, max_len)
}

/// Same enumeration against any arbitration implementation.
pub fn check_with<A: Clone>(
    initial: A,
    step: impl Fn(&mut A, ArbitrationInputs) -> ArbitrationMode + Copy,
    cfg: TimingConfig,
    max_len: usize,
) -> CheckReport {
    let mut report = CheckReport::default();
    let truth = Truth {
        engaged: false,
        whitelisted: false,
        heartbeat_age: f64::INFINITY,
        command_age: f64::INFINITY,
    };
    let mut path = Vec::with_capacity(max_len);
    dfs(&initial, step, truth, &cfg, max_len, &mut path, &mut report);
    report
}

fn dfs<A: Clone>(
    arbiter: &A,
    step: impl Fn(&mut A, ArbitrationInputs) -> ArbitrationMode + Copy,
    truth: Truth,
    cfg: &TimingConfig,
    left: usize,
    path: &mut Vec<Event>,
    r: &mut CheckReport,
) {
    if left == 0 {
        r.sequences += 1;
        return;
    }
    for e in EVENTS {
        let t = truth.apply(e, cfg);
        let mut a = arbiter.clone();
        let mode = step(
            &mut a,
            ArbitrationInputs {
                driver_engaged: t.engaged,
                whitelisted: t.whitelisted,
                heartbeat_age: t.heartbeat_age,
                command_age: t.command_age,
            },
        );
        r.states_checked += 1;
        path.push(e);
        let experimental = mode == ArbitrationMode::Experimental;
        if experimental {
            r.experimental_reached = true;
            if !t.whitelisted {
                r.experimental_while_unwhitelisted += 1;
            }
        }
        let unsafe_state = (experimental && !t.all_hold(cfg)) || (!t.engaged && mode != ArbitrationMode::Disengaged);
        if unsafe_state {
            r.safety_violation_count += 1;
            if r.safety_violations.len() < 16 {
                r.safety_violations.push(path.clone());
            }
        }
        if !cfg.latch_on_heartbeat_lapse && t.all_hold(cfg) && !experimental && r.liveness_violations.len() < 16 {
            r.liveness_violations.push(path.clone());
        }
        dfs(&a, step, t, cfg, left - 1, path, r);
        path.pop();
    }
}
