//! Flight-side model of a coaxial, gimbal-vectored thrust hopper: rigid-body
//! dynamics, actuator maps, the cascaded controller, minimum-snap reference
//! generation and the mission state machine.

pub mod actuators;
pub mod gnc;
pub mod mission_fsm;
pub mod rigid_body;
pub mod trajectory;

pub use actuators::{ActuatorCommands, ActuatorCurves};
pub use gnc::{AttitudeGains, ControllerConfig, ControllerOutput, ControllerState, PositionGains};
pub use mission_fsm::{fsm_step, MissionAction, MissionEvent, MissionState, Transition};
pub use rigid_body::{RigidBodyState, VehicleParams};
pub use trajectory::{PolySpline, TrajectorySample, Waypoint};
