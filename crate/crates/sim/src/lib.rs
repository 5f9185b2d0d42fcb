//! Closed-loop simulation service for the gimbal-vectored hopper: plant,
//! multi-rate control loop, mission runner, logging and the operator
//! protocol.

pub mod closed_loop;
pub mod config;
pub mod metrics;
pub mod plant;
pub mod protocol;
pub mod reference;
pub mod script;
pub mod sensors;
pub mod server;
pub mod simulation;
pub mod telemetry;
