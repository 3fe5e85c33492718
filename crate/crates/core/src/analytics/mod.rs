//! Batch measurements over telemetry streams: space-time density grids,
//! fleet count series, penetration arithmetic and trajectory plot data.

mod counts;
mod density;
pub mod io;
mod penetration;
mod plot;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::wire::{TelemetryRecord, Vin};

pub use counts::{count_series, CountSeries};
pub use density::{density_grid, density_grid_on, presence_time_inside, DensityGrid, GridSpec};
pub use penetration::{
    control_passing_rate, passing_rate_from_period, penetration_rate, penetration_rate_in_lanes,
    veh_per_mile_from_gap,
};
pub use plot::{trajectory_plot_data, PlotColor, PlotPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("stream for {vin} is not strictly time-sorted at sample {index}")]
    UnsortedStream { vin: Vin, index: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Telemetry grouped per vehicle, each stream in time order.
pub type Trajectories = BTreeMap<Vin, Vec<TelemetryRecord>>;

/// Groups records by VIN, sorting each stream by time and dropping
/// duplicate timestamps (first one wins).
pub fn group_by_vin<I: IntoIterator<Item = TelemetryRecord>>(records: I) -> Trajectories {
    let mut out: Trajectories = BTreeMap::new();
    for r in records {
        out.entry(r.vin.clone()).or_default().push(r);
    }
    for stream in out.values_mut() {
        stream.sort_by(|a, b| a.t.total_cmp(&b.t));
        stream.dedup_by(|b, a| a.t == b.t);
    }
    out
}

pub(crate) fn check_sorted(trajectories: &Trajectories) -> Result<(), AnalyticsError> {
    for (vin, stream) in trajectories {
        if let Some(i) = stream.windows(2).position(|w| w[0].t.partial_cmp(&w[1].t) != Some(std::cmp::Ordering::Less)) {
            return Err(AnalyticsError::UnsortedStream {
                vin: vin.clone(),
                index: i + 1,
            });
        }
    }
    Ok(())
}

pub(crate) fn time_span(trajectories: &Trajectories) -> Option<(f64, f64)> {
    trajectories
        .values()
        .flat_map(|s| s.first().zip(s.last()))
        .map(|(a, b)| (a.t, b.t))
        .reduce(|(lo, hi), (a, b)| (lo.min(a), hi.max(b)))
}
