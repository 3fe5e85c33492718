//! Experimental speed controllers.
//!
//! A controller turns local sensing plus relayed fleet measurements into a
//! target speed. The target is handed to the stock cruise system as its set
//! speed, so gap keeping stays with the stock policy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControllerCommand, DynamicsError, VehicleState};
use crate::wire::RelayMeasurement;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadObservation {
    /// Bumper-to-bumper gap, m.
    pub gap: f64,
    pub speed: f64,
}

pub struct ControlContext<'a> {
    pub ego: &'a VehicleState,
    pub lead: Option<LeadObservation>,
    pub downstream: &'a [RelayMeasurement],
    pub now: f64,
    /// Driver's cruise set speed, used when nothing else is known.
    pub set_speed: f64,
}

pub trait SpeedController: Send {
    fn name(&self) -> &str;
    fn command(&mut self, ctx: &ControlContext<'_>) -> ControllerCommand;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingParams {
    /// Averaging window, in controller ticks.
    pub window_ticks: usize,
    /// How far ahead relayed measurements are considered, miles.
    pub lookahead_mi: f64,
    /// Largest change of the target per tick, m/s.
    pub max_slew: f64,
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            window_ticks: 300,
            lookahead_mi: 0.5,
            max_slew: 0.05,
            min_speed: 0.0,
            max_speed: 33.0,
        }
    }
}

impl SmoothingParams {
    /// `comfortable_decel` and `dt` bound the slew so that following the
    /// target never asks for harder than comfortable braking.
    pub fn validate(&self, comfortable_decel: f64, dt: f64) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.into()));
        if self.window_ticks == 0 {
            return bad("smoothing window must hold at least one sample");
        }
        if !(self.lookahead_mi.is_finite() && self.lookahead_mi > 0.0) {
            return bad("lookahead must be positive");
        }
        if !(self.max_slew.is_finite() && self.max_slew > 0.0) {
            return bad("slew bound must be positive");
        }
        if self.max_slew > comfortable_decel * dt + 1e-12 {
            return bad("slew bound exceeds comfortable deceleration per tick");
        }
        if !(0.0 <= self.min_speed && self.min_speed <= self.max_speed && self.max_speed.is_finite()) {
            return bad("speed bounds must satisfy 0 <= min <= max");
        }
        Ok(())
    }
}

/// Reference wave-smoothing controller: a windowed moving average of the
/// speeds ahead, clamped to speed bounds and slew-limited per tick.
///
/// The averaged signal is the mean speed of relayed measurements downstream
/// of the ego vehicle in its direction of travel, else the lead vehicle's
/// speed, else the driver's set speed.
#[derive(Debug, Clone)]
pub struct SmoothingController {
    params: SmoothingParams,
    window: VecDeque<f64>,
    last_target: Option<f64>,
}

impl SmoothingController {
    pub fn new(params: SmoothingParams) -> Self {
        Self {
            window: VecDeque::with_capacity(params.window_ticks),
            params,
            last_target: None,
        }
    }

    pub fn params(&self) -> &SmoothingParams {
        &self.params
    }

    /// Mean speed of measurements ahead of the ego vehicle, if any.
    pub fn downstream_speed(&self, ego: &VehicleState, downstream: &[RelayMeasurement]) -> Option<f64> {
        let westbound = ego.pos.is_westbound();
        let mm = ego.pos.mile_marker;
        let (sum, n) = downstream
            .iter()
            .filter(|m| m.source_vin != ego.vin && m.westbound == westbound)
            .filter(|m| {
                // Westbound travel runs toward lower mile markers.
                let ahead = if westbound { mm - m.mile_marker } else { m.mile_marker - mm };
                ahead > 0.0 && ahead <= self.params.lookahead_mi
            })
            .fold((0.0, 0usize), |(s, n), m| (s + m.speed, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    fn push(&mut self, v: f64) -> f64 {
        if self.window.len() == self.params.window_ticks {
            self.window.pop_front();
        }
        self.window.push_back(v);
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }
}

impl SpeedController for SmoothingController {
    fn name(&self) -> &str {
        "smoothing"
    }

    fn command(&mut self, ctx: &ControlContext<'_>) -> ControllerCommand {
        let signal = self
            .downstream_speed(ctx.ego, ctx.downstream)
            .or(ctx.lead.map(|l| l.speed))
            .unwrap_or(ctx.set_speed);
        let avg = self.push(signal).clamp(self.params.min_speed, self.params.max_speed);
        let prev = self.last_target.unwrap_or(ctx.ego.speed);
        let slew = self.params.max_slew;
        let target = (prev + (avg - prev).clamp(-slew, slew)).max(0.0);
        self.last_target = Some(target);
        ControllerCommand {
            target_speed: target,
            issued_at: ctx.now,
        }
    }
}

/// Commands the driver's set speed unchanged; the control arm for A/B splits.
#[derive(Debug, Clone, Default)]
pub struct SetpointController;

impl SpeedController for SetpointController {
    fn name(&self) -> &str {
        "setpoint"
    }

    fn command(&mut self, ctx: &ControlContext<'_>) -> ControllerCommand {
        ControllerCommand {
            target_speed: ctx.set_speed.max(0.0),
            issued_at: ctx.now,
        }
    }
}

/// Controller variant named by a version set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    Smoothing(SmoothingParams),
    Setpoint,
}

impl ControllerSpec {
    pub fn build(&self) -> Box<dyn SpeedController> {
        match self {
            ControllerSpec::Smoothing(p) => Box::new(SmoothingController::new(p.clone())),
            ControllerSpec::Setpoint => Box::new(SetpointController),
        }
    }
}
