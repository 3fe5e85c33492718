//! Generalized (presence-time) density over space-time cells.
//!
//! Positions between consecutive 1 Hz samples are interpolated linearly.
//! A cell's density is the total time vehicles spend inside it divided by
//! the cell's area, so one vehicle parked in a 0.1 mile cell for a whole
//! window reads 10 veh/mi.

use serde::{Deserialize, Serialize};

use super::{check_sorted, time_span, AnalyticsError, Trajectories};
use crate::road::{Corridor, Heading};
use crate::wire::TelemetryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cell width, miles.
    pub dx: f64,
    /// Cell duration, s.
    pub dt: f64,
    pub origin_mm: f64,
    pub origin_t: f64,
    pub n_x: usize,
    pub n_t: usize,
}

impl GridSpec {
    /// Grid covering the whole corridor and every sample, with time bins
    /// aligned to multiples of `dt`.
    pub fn fit(corridor: &Corridor, trajectories: &Trajectories, dx: f64, dt: f64) -> Self {
        let n_x = bins(corridor.length_mi, dx);
        let (origin_t, n_t) = match time_span(trajectories) {
            Some((lo, hi)) => {
                let origin = (lo / dt).floor() * dt;
                (origin, bins(hi - origin, dt).max(1))
            }
            None => (0.0, 1),
        };
        Self {
            dx,
            dt,
            origin_mm: 0.0,
            origin_t,
            n_x,
            n_t,
        }
    }

    fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.dx.is_finite() && self.dx > 0.0 && self.dt.is_finite() && self.dt > 0.0) {
            return Err(AnalyticsError::InvalidInput(format!(
                "cell size must be positive, got dx={} dt={}",
                self.dx, self.dt
            )));
        }
        Ok(())
    }

    pub fn x_edge(&self, i: usize) -> f64 {
        self.origin_mm + i as f64 * self.dx
    }

    pub fn t_edge(&self, j: usize) -> f64 {
        self.origin_t + j as f64 * self.dt
    }
}

/// Number of bins of width `w` needed to cover `extent`, tolerant of
/// floating-point noise (5.0 / 0.1 gives 50, not 51).
fn bins(extent: f64, w: f64) -> usize {
    let r = extent / w;
    let n = r.round();
    if (r - n).abs() < 1e-9 {
        n as usize
    } else {
        r.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub spec: GridSpec,
    /// `cells[space_bin][time_bin]`, vehicles per mile.
    pub cells: Vec<Vec<f64>>,
}

impl DensityGrid {
    pub fn get(&self, ix: usize, it: usize) -> f64 {
        self.cells[ix][it]
    }

    /// Sum of cell presence times, vehicle-seconds.
    pub fn total_presence(&self) -> f64 {
        let area = self.spec.dx * self.spec.dt;
        self.cells.iter().flatten().map(|c| c * area).sum()
    }

    pub fn max(&self) -> f64 {
        self.cells.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Segments between consecutive samples that count toward presence:
/// neither endpoint on a turnaround connector, and both westbound when
/// `westbound_only` is set.
pub(crate) fn counted_segments<'a>(
    stream: &'a [TelemetryRecord],
    westbound_only: bool,
) -> impl Iterator<Item = (&'a TelemetryRecord, &'a TelemetryRecord)> + 'a {
    stream.windows(2).filter_map(move |w| {
        let (a, b) = (&w[0], &w[1]);
        let (ha, hb) = (a.effective_heading(), b.effective_heading());
        if ha == Heading::Turnaround || hb == Heading::Turnaround {
            return None;
        }
        if westbound_only && (ha != Heading::Westbound || hb != Heading::Westbound) {
            return None;
        }
        Some((a, b))
    })
}

pub fn density_grid(
    trajectories: &Trajectories,
    corridor: &Corridor,
    dx: f64,
    dt: f64,
    westbound_only: bool,
) -> Result<DensityGrid, AnalyticsError> {
    let spec = GridSpec::fit(corridor, trajectories, dx, dt);
    density_grid_on(trajectories, corridor, spec, westbound_only)
}

/// Density on an explicit grid. Presence outside the corridor or outside
/// the grid is ignored.
pub fn density_grid_on(
    trajectories: &Trajectories,
    corridor: &Corridor,
    spec: GridSpec,
    westbound_only: bool,
) -> Result<DensityGrid, AnalyticsError> {
    spec.validate()?;
    check_sorted(trajectories)?;
    let mut presence = vec![vec![0.0; spec.n_t]; spec.n_x];
    let x_lo = spec.origin_mm.max(0.0);
    let x_hi = spec.x_edge(spec.n_x).min(corridor.length_mi);
    let t_hi = spec.t_edge(spec.n_t);
    let mut cuts = Vec::new();
    for stream in trajectories.values() {
        for (a, b) in counted_segments(stream, westbound_only) {
            let (t0, t1) = (a.t, b.t);
            let (x0, x1) = (a.mile_marker, b.mile_marker);
            let duration = t1 - t0;
            cuts.clear();
            cuts.extend([0.0, 1.0]);
            push_crossings(&mut cuts, x0, x1, x_lo, x_hi, |i| spec.x_edge(i), spec.n_x);
            push_crossings(&mut cuts, t0, t1, spec.origin_t, t_hi, |j| spec.t_edge(j), spec.n_t);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let (ua, ub) = (w[0], w[1]);
                if ub <= ua {
                    continue;
                }
                let um = 0.5 * (ua + ub);
                let x = x0 + um * (x1 - x0);
                let t = t0 + um * duration;
                if x < x_lo || x > x_hi || t < spec.origin_t || t > t_hi {
                    continue;
                }
                let ix = (((x - spec.origin_mm) / spec.dx).floor() as usize).min(spec.n_x - 1);
                let it = (((t - spec.origin_t) / spec.dt).floor() as usize).min(spec.n_t - 1);
                presence[ix][it] += (ub - ua) * duration;
            }
        }
    }
    let area = spec.dx * spec.dt;
    for row in &mut presence {
        for c in row.iter_mut() {
            *c /= area;
        }
    }
    Ok(DensityGrid { spec, cells: presence })
}

/// Adds the parameters in (0, 1) where the linear path `v0 -> v1` crosses
/// the clip bounds or any of the `n + 1` bin edges.
fn push_crossings(
    cuts: &mut Vec<f64>,
    v0: f64,
    v1: f64,
    lo: f64,
    hi: f64,
    edge: impl Fn(usize) -> f64,
    n: usize,
) {
    if v0 == v1 {
        return;
    }
    let (vmin, vmax) = if v0 < v1 { (v0, v1) } else { (v1, v0) };
    let mut add = |e: f64| {
        if e > vmin && e < vmax {
            cuts.push((e - v0) / (v1 - v0));
        }
    };
    add(lo);
    add(hi);
    for i in 0..=n {
        add(edge(i));
    }
}

/// Total vehicle-seconds spent inside the corridor over the counted
/// segments, clipped to `[t_lo, t_hi]`.
pub fn presence_time_inside(
    trajectories: &Trajectories,
    corridor: &Corridor,
    westbound_only: bool,
    t_lo: f64,
    t_hi: f64,
) -> f64 {
    let mut total = 0.0;
    for stream in trajectories.values() {
        for (a, b) in counted_segments(stream, westbound_only) {
            let (u_lo, u_hi) = interval_params(a.mile_marker, b.mile_marker, 0.0, corridor.length_mi);
            let (v_lo, v_hi) = interval_params(a.t, b.t, t_lo, t_hi);
            let lo = u_lo.max(v_lo);
            let hi = u_hi.min(v_hi);
            if hi > lo {
                total += (hi - lo) * (b.t - a.t);
            }
        }
    }
    total
}

/// Parameter range in [0, 1] over which `v0 + u (v1 - v0)` lies in `[lo, hi]`.
fn interval_params(v0: f64, v1: f64, lo: f64, hi: f64) -> (f64, f64) {
    if v0 == v1 {
        return if (lo..=hi).contains(&v0) { (0.0, 1.0) } else { (0.0, 0.0) };
    }
    let a = (lo - v0) / (v1 - v0);
    let b = (hi - v0) / (v1 - v0);
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    (a.max(0.0), b.min(1.0))
}
