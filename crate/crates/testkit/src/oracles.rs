//! Brute-force recomputations of analytics and relay queries.

use cavfleet_core::analytics::{GridSpec, Trajectories};
use cavfleet_core::wire::{RelayMeasurement, TelemetryRecord};
use cavfleet_core::{Corridor, Heading};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Low,
    Bin(usize),
    High,
}

fn classify(v: f64, lo: f64, hi: f64, origin: f64, w: f64, n: usize) -> Class {
    if v < lo {
        Class::Low
    } else if v > hi {
        Class::High
    } else {
        Class::Bin((((v - origin) / w).floor().max(0.0) as usize).min(n - 1))
    }
}

fn heading(r: &TelemetryRecord) -> Heading {
    match r.heading {
        Some(h) => h,
        None if r.westbound => Heading::Westbound,
        None => Heading::Eastbound,
    }
}

fn segment_counts(a: &TelemetryRecord, b: &TelemetryRecord, westbound_only: bool) -> bool {
    let (ha, hb) = (heading(a), heading(b));
    let on_freeway = ha != Heading::Turnaround && hb != Heading::Turnaround;
    let direction_ok = !westbound_only || (ha == Heading::Westbound && hb == Heading::Westbound);
    on_freeway && direction_ok
}

/// Presence-time density by recursive bisection of each interpolated
/// segment: a sub-interval whose two ends fall in the same cell lies wholly
/// in that cell (cells are convex); mixed sub-intervals are split until
/// they are shorter than a nanosecond. Returns `(cells in veh/mi, total
/// presence inside the grid in vehicle-seconds)`.
pub fn density_by_bisection(
    trajectories: &Trajectories,
    corridor: &Corridor,
    spec: &GridSpec,
    westbound_only: bool,
) -> (Vec<Vec<f64>>, f64) {
    let mut presence = vec![vec![0.0; spec.n_t]; spec.n_x];
    let x_hi = corridor.length_mi.min(spec.origin_mm + spec.n_x as f64 * spec.dx);
    let t_hi = spec.origin_t + spec.n_t as f64 * spec.dt;
    let mut total = 0.0;
    for stream in trajectories.values() {
        for w in stream.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if !segment_counts(a, b, westbound_only) {
                continue;
            }
            let dur = b.t - a.t;
            let at = |u: f64| {
                let x = a.mile_marker + u * (b.mile_marker - a.mile_marker);
                let t = a.t + u * dur;
                (
                    classify(x, spec.origin_mm.max(0.0), x_hi, spec.origin_mm, spec.dx, spec.n_x),
                    classify(t, spec.origin_t, t_hi, spec.origin_t, spec.dt, spec.n_t),
                )
            };
            let mut stack = vec![(0.0f64, 1.0f64, at(0.0), at(1.0), 0u32)];
            while let Some((ua, ub, ca, cb, depth)) = stack.pop() {
                let resolved = if ca == cb {
                    Some(ca)
                } else if (ub - ua) * dur < 1e-9 || depth > 64 {
                    Some(at(0.5 * (ua + ub)))
                } else {
                    None
                };
                match resolved {
                    Some((Class::Bin(i), Class::Bin(j))) => {
                        presence[i][j] += (ub - ua) * dur;
                        total += (ub - ua) * dur;
                    }
                    Some(_) => {}
                    None => {
                        let um = 0.5 * (ua + ub);
                        let cm = at(um);
                        stack.push((ua, um, ca, cm, depth + 1));
                        stack.push((um, ub, cm, cb, depth + 1));
                    }
                }
            }
        }
    }
    let area = spec.dx * spec.dt;
    for row in &mut presence {
        for c in row.iter_mut() {
            *c /= area;
        }
    }
    (presence, total)
}

/// Per-window counts by scanning every sample for every window.
pub fn counts_brute_force(
    trajectories: &Trajectories,
    corridor: &Corridor,
    window: f64,
    origin_t: f64,
    n_windows: usize,
) -> Vec<(u32, u32, u32)> {
    (0..n_windows)
        .map(|k| {
            let ws = origin_t + k as f64 * window;
            let we = ws + window;
            let mut on = 0;
            let mut testbed = 0;
            let mut engaged = 0;
            for stream in trajectories.values() {
                let (Some(first), Some(last)) = (stream.first(), stream.last()) else {
                    continue;
                };
                if first.t < we && last.t >= ws {
                    on += 1;
                }
                let in_window: Vec<_> = stream.iter().filter(|r| r.t >= ws && r.t < we).collect();
                let on_tb = |r: &&&TelemetryRecord| {
                    heading(r) != Heading::Turnaround
                        && r.mile_marker >= corridor.testbed_start_mm
                        && r.mile_marker <= corridor.testbed_end_mm
                };
                if in_window.iter().any(|r| on_tb(&r)) {
                    testbed += 1;
                }
                if in_window
                    .iter()
                    .any(|r| on_tb(&r) && heading(r) == Heading::Westbound && r.control_engaged)
                {
                    engaged += 1;
                }
            }
            (on, testbed, engaged)
        })
        .collect()
}

/// Measurements inside `[mm_lo, mm_hi]` that are at most `max_age` old at `now`.
pub fn relay_filter(all: &[RelayMeasurement], mm_lo: f64, mm_hi: f64, max_age: f64, now: f64) -> Vec<RelayMeasurement> {
    all.iter()
        .filter(|m| m.mile_marker >= mm_lo && m.mile_marker <= mm_hi && now - m.t <= max_age)
        .cloned()
        .collect()
}

/// Order-independent key for set comparison of measurement lists.
pub fn measurement_key(m: &RelayMeasurement) -> (String, u64, u64, u32, u64, bool) {
    (
        m.source_vin.0.clone(),
        m.t.to_bits(),
        m.mile_marker.to_bits(),
        m.lane,
        m.speed.to_bits(),
        m.westbound,
    )
}
