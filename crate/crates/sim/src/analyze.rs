//! Analytics over a run log, as exposed by `cavfleet analyze`.

use std::io::Write;

use cavfleet_core::analytics::io::{write_counts_csv, write_density_csv, write_plot_jsonl};
use cavfleet_core::analytics::{
    control_passing_rate, count_series, density_grid, passing_rate_from_period, penetration_rate,
    penetration_rate_in_lanes, trajectory_plot_data,
};

use crate::error::SimError;
use crate::runlog::RunLog;

fn csv_err(e: impl std::fmt::Display) -> SimError {
    SimError::Io("writing csv".into(), std::io::Error::other(e.to_string()))
}

pub fn density_csv<W: Write>(log: &RunLog, dx: f64, dt: f64, westbound_only: bool, out: W) -> Result<(), SimError> {
    let grid = density_grid(&log.trajectories()?, &log.scenario().corridor, dx, dt, westbound_only)?;
    write_density_csv(&grid, out).map_err(csv_err)
}

pub fn counts_csv<W: Write>(log: &RunLog, window: f64, out: W) -> Result<(), SimError> {
    let series = count_series(&log.trajectories()?, &log.scenario().corridor, window)?;
    write_counts_csv(&series, out).map_err(csv_err)
}

pub fn plot_jsonl<W: Write>(log: &RunLog, out: W) -> Result<(), SimError> {
    let points = trajectory_plot_data(&log.trajectories()?)?;
    write_plot_jsonl(&points, out).map_err(|e| SimError::Io("writing plot data".into(), e))
}

/// Where the controlled-vehicle passing rate comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlRateSource {
    /// One controlled vehicle every this many seconds.
    Period(f64),
    /// Westbound engaged crossings of this mile marker in a run log.
    Measured { mm: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenetrationReport {
    pub source: ControlRateSource,
    /// Controlled vehicles per hour.
    pub control_rate: f64,
    /// All vehicles per hour, across all lanes.
    pub total_flow: f64,
    pub penetration: f64,
    /// `(lane flow fraction, penetration within those lanes)`.
    pub in_lanes: Option<(f64, f64)>,
}

pub fn penetration(
    source: ControlRateSource,
    total_flow: f64,
    lane_fraction: Option<f64>,
) -> Result<PenetrationReport, SimError> {
    let control_rate = match source {
        ControlRateSource::Period(p) => passing_rate_from_period(p)?,
        ControlRateSource::Measured { rate, .. } => rate,
    };
    let penetration = penetration_rate(control_rate, total_flow)?;
    let in_lanes = lane_fraction
        .map(|f| penetration_rate_in_lanes(control_rate, total_flow, f).map(|r| (f, r)))
        .transpose()?;
    Ok(PenetrationReport {
        source,
        control_rate,
        total_flow,
        penetration,
        in_lanes,
    })
}

pub fn measured_rate(log: &RunLog, mm: f64) -> Result<ControlRateSource, SimError> {
    let rate = control_passing_rate(&log.trajectories()?, mm)?;
    Ok(ControlRateSource::Measured { mm, rate })
}

impl std::fmt::Display for PenetrationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.source {
            ControlRateSource::Period(p) => writeln!(
                f,
                "control passing rate: {:.2} veh/hr (one every {p} s)",
                self.control_rate
            )?,
            ControlRateSource::Measured { mm, .. } => writeln!(
                f,
                "control passing rate: {:.2} veh/hr (engaged westbound crossings of mile {mm})",
                self.control_rate
            )?,
        }
        writeln!(f, "total flow: {} veh/hr", self.total_flow)?;
        writeln!(f, "penetration: {:.2}%", 100.0 * self.penetration)?;
        if let Some((frac, r)) = self.in_lanes {
            writeln!(f, "penetration in lanes carrying {:.0}% of flow: {:.2}%", 100.0 * frac, 100.0 * r)?;
        }
        Ok(())
    }
}
