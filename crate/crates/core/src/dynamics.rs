//! Longitudinal vehicle dynamics: the human car-following law, the stock
//! adaptive cruise policy, and the fixed-step state update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road::{LoopRoute, RoadError, RoutePosition};
use crate::units::meters_to_miles;
use crate::wire::Vin;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("collision: gap {gap:.3} m is not positive")]
    Collision { gap: f64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Road(#[from] RoadError),
}

/// Intelligent Driver Model parameters for background (human) traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanDriverParams {
    /// Desired speed, m/s.
    pub desired_speed: f64,
    /// Desired time gap, s.
    pub time_gap: f64,
    /// Maximum acceleration, m/s².
    pub max_accel: f64,
    /// Comfortable deceleration (positive), m/s².
    pub comfortable_decel: f64,
    pub accel_exponent: f64,
    /// Jam spacing, m.
    pub jam_spacing: f64,
    pub vehicle_length: f64,
    /// Hard-braking bound the output is clamped to (positive), m/s².
    #[serde(default = "HumanDriverParams::default_hard_decel")]
    pub hard_decel: f64,
}

impl Default for HumanDriverParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            time_gap: 1.0,
            max_accel: 1.0,
            comfortable_decel: 1.5,
            accel_exponent: 4.0,
            jam_spacing: 2.0,
            vehicle_length: 5.0,
            hard_decel: Self::default_hard_decel(),
        }
    }
}

impl HumanDriverParams {
    fn default_hard_decel() -> f64 {
        9.0
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all_positive = [
            self.desired_speed,
            self.time_gap,
            self.max_accel,
            self.comfortable_decel,
            self.accel_exponent,
            self.jam_spacing,
            self.vehicle_length,
            self.hard_decel,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(DynamicsError::InvalidParams(
                "human driver parameters must all be positive".into(),
            ));
        }
        if self.accel_exponent < 1.0 {
            return Err(DynamicsError::InvalidParams(
                "acceleration exponent must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Bumper-to-bumper gap at which a vehicle at speed `v` sits in equilibrium
    /// behind a leader at the same speed.
    pub fn equilibrium_gap(&self, v: f64) -> f64 {
        let s_star = self.jam_spacing + v * self.time_gap;
        let free = 1.0 - (v / self.desired_speed).powf(self.accel_exponent);
        s_star / free.sqrt()
    }
}

/// IDM acceleration. `gap` is bumper-to-bumper distance to the leader in
/// meters; pass `f64::INFINITY` for a free road.
pub fn idm_accel(
    ego_speed: f64,
    gap: f64,
    lead_speed: f64,
    p: &HumanDriverParams,
) -> Result<f64, DynamicsError> {
    if gap.is_nan() || gap <= 0.0 {
        return Err(DynamicsError::Collision { gap });
    }
    let v = ego_speed;
    let dv = v - lead_speed;
    let free = (v / p.desired_speed).powf(p.accel_exponent);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let dynamic = v * p.time_gap + v * dv / (2.0 * (p.max_accel * p.comfortable_decel).sqrt());
        let s_star = p.jam_spacing + dynamic.max(0.0);
        (s_star / gap).powi(2)
    };
    let a = p.max_accel * (1.0 - free - interaction);
    Ok(a.clamp(-p.hard_decel, p.max_accel))
}

/// Stock adaptive cruise: constant-time-gap linear policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccParams {
    /// Headway the gap regulator holds, s.
    pub time_gap: f64,
    /// Gap held at standstill, m.
    #[serde(default)]
    pub standstill_gap: f64,
    /// Speed-tracking gain, 1/s.
    pub k_speed: f64,
    /// Gap gain, 1/s².
    pub k_gap: f64,
    /// Relative-speed gain, 1/s.
    pub k_rel: f64,
    pub max_accel: f64,
    /// Braking bound (positive), m/s².
    pub max_decel: f64,
    /// Radar range; leaders further away are ignored, m.
    pub sensor_range: f64,
}

impl AccParams {
    /// Parameter presets standing in for the three OEM cruise systems.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self {
            time_gap: 1.5,
            standstill_gap: 3.0,
            k_speed: 0.4,
            k_gap: 0.1,
            k_rel: 0.6,
            max_accel: 1.5,
            max_decel: 3.5,
            sensor_range: 120.0,
        };
        match name {
            "oem_a" => Some(base),
            "oem_b" => Some(Self {
                time_gap: 1.8,
                k_gap: 0.08,
                k_rel: 0.5,
                max_accel: 1.2,
                ..base
            }),
            "oem_c" => Some(Self {
                time_gap: 1.3,
                standstill_gap: 4.0,
                k_gap: 0.12,
                k_rel: 0.7,
                max_decel: 4.0,
                sensor_range: 150.0,
                ..base
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = [
            self.time_gap,
            self.k_speed,
            self.k_gap,
            self.max_accel,
            self.max_decel,
            self.sensor_range,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
            && self.k_rel.is_finite()
            && self.k_rel >= 0.0
            && self.standstill_gap.is_finite()
            && self.standstill_gap >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidParams(
                "ACC gains, bounds and range must be positive".into(),
            ))
        }
    }
}

impl Default for AccParams {
    fn default() -> Self {
        Self::preset("oem_a").expect("preset exists")
    }
}

/// Stock ACC acceleration. `gap` is bumper-to-bumper distance to the leader,
/// `f64::INFINITY` when nothing is ahead.
pub fn stock_acc_accel(
    ego_speed: f64,
    gap: f64,
    lead_speed: f64,
    set_speed: f64,
    p: &AccParams,
) -> Result<f64, DynamicsError> {
    if gap.is_nan() || gap <= 0.0 {
        return Err(DynamicsError::Collision { gap });
    }
    let speed_term = p.k_speed * (set_speed - ego_speed);
    let a = if gap <= p.sensor_range {
        let gap_term = p.k_gap * (gap - p.standstill_gap - p.time_gap * ego_speed)
            + p.k_rel * (lead_speed - ego_speed);
        speed_term.min(gap_term)
    } else {
        speed_term
    };
    Ok(a.clamp(-p.max_decel, p.max_accel))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArbitrationMode {
    Disengaged,
    StockAcc,
    Experimental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerCommand {
    pub target_speed: f64,
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub vin: Vin,
    pub pos: RoutePosition,
    pub speed: f64,
    pub accel: f64,
    pub mode: ArbitrationMode,
    /// Present exactly when `mode` is experimental.
    pub commanded_speed: Option<f64>,
    pub driver_engaged: bool,
}

impl VehicleState {
    pub fn new(vin: Vin, pos: RoutePosition, speed: f64) -> Self {
        Self {
            vin,
            pos,
            speed,
            accel: 0.0,
            mode: ArbitrationMode::Disengaged,
            commanded_speed: None,
            driver_engaged: false,
        }
    }

    /// Sets the mode together with the commanded speed that must accompany it.
    pub fn set_mode(&mut self, mode: ArbitrationMode, command: Option<f64>) {
        self.mode = mode;
        self.commanded_speed = match mode {
            ArbitrationMode::Experimental => command,
            _ => None,
        };
    }
}

/// Semi-implicit Euler update: speed first (never negative), then position
/// with the new speed. The recorded acceleration is the one actually realised.
pub fn step_vehicle(
    state: &VehicleState,
    accel: f64,
    dt: f64,
    route: &LoopRoute,
) -> Result<VehicleState, DynamicsError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    let speed = (state.speed + accel * dt).max(0.0);
    let pos = route.advance_position(&state.pos, meters_to_miles(speed * dt))?;
    Ok(VehicleState {
        pos,
        speed,
        accel: (speed - state.speed) / dt,
        ..state.clone()
    })
}
