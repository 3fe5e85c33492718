//! Corridor geometry and looping routes.
//!
//! The corridor is a straight freeway stretch addressed by mile markers.
//! Westbound travel runs toward decreasing mile markers. A [`LoopRoute`]
//! enters westbound at `westbound_entry_mm`, leaves at `westbound_exit_mm`,
//! turns around on a connector arc, returns eastbound and turns around
//! again at the entry. Positions on a route are arc lengths along that
//! closed cycle; mile marker and heading are derived from the arc length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoadError {
    #[error("invalid corridor: {0}")]
    InvalidCorridor(String),
    #[error("invalid route `{route}`: {reason}")]
    InvalidRoute { route: String, reason: String },
    #[error("negative advance distance {0} mi")]
    NegativeAdvance(f64),
    #[error("position on route `{found}` used with route `{expected}`")]
    RouteMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corridor {
    #[serde(default = "Corridor::default_length")]
    pub length_mi: f64,
    #[serde(default = "Corridor::default_lane_count")]
    pub lane_count: u32,
    #[serde(default = "Corridor::default_controlled_lanes")]
    pub controlled_lanes: u32,
    #[serde(default)]
    pub testbed_start_mm: f64,
    #[serde(default = "Corridor::default_length")]
    pub testbed_end_mm: f64,
}

impl Default for Corridor {
    fn default() -> Self {
        Self {
            length_mi: 5.0,
            lane_count: 4,
            controlled_lanes: 3,
            testbed_start_mm: 0.0,
            testbed_end_mm: 5.0,
        }
    }
}

impl Corridor {
    fn default_length() -> f64 {
        5.0
    }
    fn default_lane_count() -> u32 {
        4
    }
    fn default_controlled_lanes() -> u32 {
        3
    }

    pub fn validate(&self) -> Result<(), RoadError> {
        let bad = |msg: String| Err(RoadError::InvalidCorridor(msg));
        if !(self.length_mi.is_finite() && self.length_mi > 0.0) {
            return bad(format!("length_mi must be positive, got {}", self.length_mi));
        }
        if !(0.0 <= self.testbed_start_mm
            && self.testbed_start_mm < self.testbed_end_mm
            && self.testbed_end_mm <= self.length_mi)
        {
            return bad(format!(
                "testbed bounds [{}, {}] must satisfy 0 <= start < end <= {}",
                self.testbed_start_mm, self.testbed_end_mm, self.length_mi
            ));
        }
        if self.controlled_lanes < 1 || self.controlled_lanes > self.lane_count {
            return bad(format!(
                "controlled_lanes {} must lie in 1..={}",
                self.controlled_lanes, self.lane_count
            ));
        }
        Ok(())
    }

    /// Lanes are numbered from 1. Controlled lanes are the lowest-numbered ones.
    pub fn is_controlled_lane(&self, lane: u32) -> bool {
        lane >= 1 && lane <= self.controlled_lanes
    }

    pub fn contains_mm(&self, mm: f64) -> bool {
        (0.0..=self.length_mi).contains(&mm)
    }

    pub fn testbed_contains(&self, mm: f64) -> bool {
        (self.testbed_start_mm..=self.testbed_end_mm).contains(&mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    Westbound,
    Eastbound,
    Turnaround,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopRoute {
    pub id: String,
    pub westbound_entry_mm: f64,
    pub westbound_exit_mm: f64,
    #[serde(default = "LoopRoute::default_turnaround_length")]
    pub turnaround_length_mi: f64,
    /// Speed limit on the turnaround connectors, m/s.
    #[serde(default = "LoopRoute::default_turnaround_speed")]
    pub turnaround_speed_limit: f64,
}

impl LoopRoute {
    fn default_turnaround_length() -> f64 {
        0.25
    }
    fn default_turnaround_speed() -> f64 {
        15.0
    }

    pub fn new(id: impl Into<String>, entry_mm: f64, exit_mm: f64, turnaround_mi: f64) -> Self {
        Self {
            id: id.into(),
            westbound_entry_mm: entry_mm,
            westbound_exit_mm: exit_mm,
            turnaround_length_mi: turnaround_mi,
            turnaround_speed_limit: Self::default_turnaround_speed(),
        }
    }

    pub fn validate(&self, corridor: &Corridor) -> Result<(), RoadError> {
        let bad = |reason: String| {
            Err(RoadError::InvalidRoute {
                route: self.id.clone(),
                reason,
            })
        };
        if !corridor.contains_mm(self.westbound_entry_mm)
            || !corridor.contains_mm(self.westbound_exit_mm)
        {
            return bad(format!(
                "entry {} / exit {} must lie within corridor [0, {}]",
                self.westbound_entry_mm, self.westbound_exit_mm, corridor.length_mi
            ));
        }
        if self.westbound_entry_mm <= self.westbound_exit_mm {
            return bad("westbound entry must be at a higher mile marker than the exit".into());
        }
        if !(self.turnaround_length_mi.is_finite() && self.turnaround_length_mi >= 0.0) {
            return bad("turnaround length must be non-negative".into());
        }
        if !(self.turnaround_speed_limit.is_finite() && self.turnaround_speed_limit > 0.0) {
            return bad("turnaround speed limit must be positive".into());
        }
        Ok(())
    }

    /// Driven length of one freeway leg.
    pub fn leg_mi(&self) -> f64 {
        self.westbound_entry_mm - self.westbound_exit_mm
    }

    pub fn total_cycle_mi(&self) -> f64 {
        2.0 * self.leg_mi() + 2.0 * self.turnaround_length_mi
    }

    /// Segment boundaries along the cycle: westbound ends at `b[0]`, the exit
    /// turnaround at `b[1]`, eastbound at `b[2]`, the entry turnaround at the cycle end.
    fn boundaries(&self) -> [f64; 3] {
        let w = self.leg_mi();
        let t = self.turnaround_length_mi;
        [w, w + t, 2.0 * w + t]
    }

    pub fn heading_at(&self, arc_s: f64) -> Heading {
        let [b0, b1, b2] = self.boundaries();
        if arc_s < b0 {
            Heading::Westbound
        } else if arc_s < b1 {
            Heading::Turnaround
        } else if arc_s < b2 {
            Heading::Eastbound
        } else {
            Heading::Turnaround
        }
    }

    pub fn mile_marker_at(&self, arc_s: f64) -> f64 {
        let [b0, b1, b2] = self.boundaries();
        if arc_s < b0 {
            self.westbound_entry_mm - arc_s
        } else if arc_s < b1 {
            self.westbound_exit_mm
        } else if arc_s < b2 {
            self.westbound_exit_mm + (arc_s - b1)
        } else {
            self.westbound_entry_mm
        }
    }

    /// Speed limit in force at `arc_s`, m/s. `None` on freeway legs.
    pub fn speed_limit_at(&self, arc_s: f64) -> Option<f64> {
        (self.heading_at(arc_s) == Heading::Turnaround).then_some(self.turnaround_speed_limit)
    }

    /// Distance in miles from `arc_s` to the start of the next turnaround
    /// connector, or zero when already on one.
    pub fn distance_to_turnaround(&self, arc_s: f64) -> f64 {
        let [b0, b1, b2] = self.boundaries();
        if arc_s < b0 {
            b0 - arc_s
        } else if arc_s < b1 {
            0.0
        } else if arc_s < b2 {
            b2 - arc_s
        } else {
            0.0
        }
    }

    fn wrap(&self, arc_s: f64) -> f64 {
        let cycle = self.total_cycle_mi();
        let r = arc_s.rem_euclid(cycle);
        // rem_euclid may round up to exactly `cycle`.
        if r >= cycle {
            0.0
        } else {
            r
        }
    }

    pub fn position(&self, arc_s: f64, lane: u32) -> RoutePosition {
        let arc_s = self.wrap(arc_s);
        RoutePosition {
            route_id: self.id.clone(),
            arc_s,
            lane,
            mile_marker: self.mile_marker_at(arc_s),
            heading: self.heading_at(arc_s),
        }
    }

    /// Moves `pos` forward by `ds` miles along the cycle.
    pub fn advance_position(&self, pos: &RoutePosition, ds: f64) -> Result<RoutePosition, RoadError> {
        if pos.route_id != self.id {
            return Err(RoadError::RouteMismatch {
                expected: self.id.clone(),
                found: pos.route_id.clone(),
            });
        }
        if ds < 0.0 || ds.is_nan() {
            return Err(RoadError::NegativeAdvance(ds));
        }
        Ok(self.position(pos.arc_s + ds, pos.lane))
    }

    /// Forward arc distance from `from` to `to` along the cycle, in `[0, cycle)`.
    pub fn forward_distance(&self, from: f64, to: f64) -> f64 {
        self.wrap(to - from)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePosition {
    pub route_id: String,
    pub arc_s: f64,
    pub lane: u32,
    pub mile_marker: f64,
    pub heading: Heading,
}

impl RoutePosition {
    pub fn is_westbound(&self) -> bool {
        self.heading == Heading::Westbound
    }

    pub fn is_on_testbed(&self, corridor: &Corridor) -> bool {
        is_on_testbed(self.mile_marker, self.heading, corridor)
    }
}

/// On the testbed means inside the testbed bounds on a freeway leg;
/// turnaround connectors never count.
pub fn is_on_testbed(mile_marker: f64, heading: Heading, corridor: &Corridor) -> bool {
    heading != Heading::Turnaround && corridor.testbed_contains(mile_marker)
}
