//! Fleet count series per time window.

use serde::{Deserialize, Serialize};

use super::{check_sorted, time_span, AnalyticsError, Trajectories};
use crate::road::{is_on_testbed, Corridor, Heading};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    /// Window length, s.
    pub window: f64,
    pub origin_t: f64,
    /// Vehicles whose recording has started and not yet ended.
    pub on: Vec<u32>,
    /// Of those, vehicles sampled on the testbed (freeway legs only).
    pub on_testbed: Vec<u32>,
    /// Of those, vehicles sampled on the testbed, westbound, with control engaged.
    pub engaged_westbound: Vec<u32>,
}

impl CountSeries {
    pub fn len(&self) -> usize {
        self.on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.on.is_empty()
    }

    pub fn window_start(&self, k: usize) -> f64 {
        self.origin_t + k as f64 * self.window
    }
}

/// Counts per window. A vehicle is "on" from its first record through its
/// last. The testbed and engaged predicates are evaluated per sample; one
/// qualifying sample in a window counts the vehicle for that window.
pub fn count_series(
    trajectories: &Trajectories,
    corridor: &Corridor,
    window: f64,
) -> Result<CountSeries, AnalyticsError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(AnalyticsError::InvalidInput(format!(
            "window must be positive, got {window}"
        )));
    }
    check_sorted(trajectories)?;
    let Some((lo, hi)) = time_span(trajectories) else {
        return Ok(CountSeries {
            window,
            origin_t: 0.0,
            on: Vec::new(),
            on_testbed: Vec::new(),
            engaged_westbound: Vec::new(),
        });
    };
    let origin_t = (lo / window).floor() * window;
    let index = |t: f64| ((t - origin_t) / window).floor() as usize;
    let n = index(hi) + 1;
    let mut on = vec![0u32; n];
    let mut on_testbed = vec![0u32; n];
    let mut engaged = vec![0u32; n];
    let mut seen_testbed = vec![false; n];
    let mut seen_engaged = vec![false; n];

    for stream in trajectories.values() {
        let (Some(first), Some(last)) = (stream.first(), stream.last()) else {
            continue;
        };
        for c in &mut on[index(first.t)..=index(last.t)] {
            *c += 1;
        }
        seen_testbed.fill(false);
        seen_engaged.fill(false);
        for r in stream {
            let k = index(r.t);
            let heading = r.effective_heading();
            if is_on_testbed(r.mile_marker, heading, corridor) {
                seen_testbed[k] = true;
                if heading == Heading::Westbound && r.control_engaged {
                    seen_engaged[k] = true;
                }
            }
        }
        for k in 0..n {
            on_testbed[k] += seen_testbed[k] as u32;
            engaged[k] += seen_engaged[k] as u32;
        }
    }
    Ok(CountSeries {
        window,
        origin_t,
        on,
        on_testbed,
        engaged_westbound: engaged,
    })
}
