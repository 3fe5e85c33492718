//! Random synthetic fleets for property and acceptance tests.

use cavfleet_core::analytics::Trajectories;
use cavfleet_core::wire::{RelayMeasurement, TelemetryRecord, Vin};
use cavfleet_core::Heading;
use rand::Rng;

/// Miles travelled per second at 1 m/s.
const MI_PER_M: f64 = 1.0 / 1609.344;

/// A random fleet of at most `max_vehicles` vehicles sampled at 1 Hz for at
/// most `max_duration` seconds. Vehicles wander up and down a corridor of
/// `length_mi` (sometimes leaving it), switching heading through turnaround
/// phases and toggling control engagement.
pub fn random_fleet<R: Rng>(rng: &mut R, max_vehicles: usize, max_duration: f64, length_mi: f64) -> Trajectories {
    let n = rng.random_range(1..=max_vehicles);
    let mut out = Trajectories::new();
    for v in 0..n {
        let vin = Vin::new(format!("SYN{v:03}"));
        let start = rng.random_range(0.0..max_duration * 0.25).floor();
        let end = rng.random_range(start + 2.0..=max_duration.max(start + 2.0));
        let mut t = start;
        let mut mm = rng.random_range(-0.5..length_mi + 0.5);
        let mut speed: f64 = rng.random_range(0.0..30.0);
        let mut heading = match rng.random_range(0..3) {
            0 => Heading::Westbound,
            1 => Heading::Eastbound,
            _ => Heading::Turnaround,
        };
        let mut engaged = rng.random_bool(0.5);
        let mut stream = Vec::new();
        while t <= end {
            stream.push(TelemetryRecord {
                vin: vin.clone(),
                t,
                mile_marker: mm,
                lane: rng.random_range(1..=4),
                speed,
                accel: 0.0,
                control_engaged: engaged,
                westbound: heading == Heading::Westbound,
                heading: Some(heading),
                commanded_speed: engaged.then_some(speed),
            });
            // Mostly 1 s sampling with the odd dropped sample.
            let step = if rng.random_bool(0.05) { rng.random_range(2..6) as f64 } else { 1.0 };
            let dist = speed * step * MI_PER_M;
            match heading {
                Heading::Westbound => mm -= dist,
                Heading::Eastbound => mm += dist,
                Heading::Turnaround => {}
            }
            speed = (speed + rng.random_range(-2.0..2.0)).clamp(0.0, 35.0);
            if rng.random_bool(0.01) {
                heading = match heading {
                    Heading::Turnaround => {
                        if rng.random_bool(0.5) {
                            Heading::Westbound
                        } else {
                            Heading::Eastbound
                        }
                    }
                    _ => Heading::Turnaround,
                };
            }
            if rng.random_bool(0.02) {
                engaged = !engaged;
            }
            // Occasionally park.
            if rng.random_bool(0.005) {
                speed = 0.0;
            }
            t += step;
        }
        out.insert(vin, stream);
    }
    out
}

/// Random relay measurements spread over `[0, length_mi]` and `[0, horizon]`.
pub fn random_measurements<R: Rng>(rng: &mut R, n: usize, length_mi: f64, horizon: f64) -> Vec<RelayMeasurement> {
    let mut out: Vec<_> = (0..n)
        .map(|i| RelayMeasurement {
            source_vin: Vin::new(format!("R{:02}", i % 37)),
            t: rng.random_range(0.0..horizon),
            mile_marker: rng.random_range(0.0..length_mi),
            lane: rng.random_range(1..=4),
            speed: rng.random_range(0.0..35.0),
            westbound: rng.random_bool(0.5),
        })
        .collect();
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}
