//! Core model of the CAV fleet testbed: corridor geometry, vehicle
//! dynamics, control arbitration, speed controllers, the fleet wire
//! protocol types and trajectory analytics.

pub mod analytics;
pub mod arbitration;
pub mod controller;
pub mod dynamics;
pub mod road;
pub mod traffic;
pub mod units;
pub mod wire;

pub use arbitration::{arbitrate, Arbiter, ArbitrationInputs, TimingConfig};
pub use controller::{ControlContext, ControllerSpec, LeadObservation, SmoothingController, SmoothingParams, SpeedController};
pub use dynamics::{
    idm_accel, step_vehicle, stock_acc_accel, AccParams, ArbitrationMode, ControllerCommand, DynamicsError,
    HumanDriverParams, VehicleState,
};
pub use road::{is_on_testbed, Corridor, Heading, LoopRoute, RoadError, RoutePosition};
pub use wire::Vin;
