//! Fixed-step multi-rate loop: dynamics every tick, inner and outer
//! controller passes on integer dividers of the sim rate.

use hopper_core::actuators::ActuatorCommands;
use hopper_core::gnc::{inner_loop_update, outer_loop_update, ControlError, ControllerConfig, ControllerOutput, ControllerState};
use hopper_core::rigid_body::{rotation_from_euler_zyx, DynamicsError, RigidBodyState, Vec3};
use hopper_core::trajectory::TrajectorySample;

use crate::config::{Rates, SimConfig};
use crate::plant::Plant;
use crate::sensors::SensorChannel;

/// Counters used to check the rate contract.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoopStats {
    pub dynamics_ticks: u64,
    pub inner_runs: u64,
    pub outer_runs: u64,
    /// Dynamics ticks between the two most recent outer passes.
    pub last_outer_gap: Option<u64>,
    /// Gaps that differed from the configured divider.
    pub outer_gap_violations: u64,
}

/// What happened during one tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub outer_ran: bool,
    pub inner_ran: bool,
    pub control_error: Option<ControlError>,
}

pub struct ClosedLoop {
    pub controller_cfg: ControllerConfig,
    pub rates: Rates,
    pub plant: Plant,
    pub controller: ControllerState,
    sensors: SensorChannel,
    tick: u64,
    engaged: bool,
    measured: RigidBodyState,
    last_output: Option<ControllerOutput>,
    last_outer_tick: Option<u64>,
    stats: LoopStats,
}

impl ClosedLoop {
    pub fn new(cfg: &SimConfig) -> Self {
        let p = cfg.initial.position;
        let mut state = RigidBodyState::at_rest(Vec3::new(p[0], p[1], p[2]));
        state.attitude = rotation_from_euler_zyx(0.0, 0.0, cfg.initial.yaw);
        let plant = Plant::new(state, cfg.vehicle, cfg.actuators, cfg.servo, cfg.disturbance);
        Self {
            controller_cfg: cfg.controller(),
            rates: cfg.rates,
            plant,
            controller: ControllerState::new(cfg.initial.yaw),
            sensors: SensorChannel::new(&cfg.noise, cfg.seed),
            tick: 0,
            engaged: false,
            measured: state,
            last_output: None,
            last_outer_tick: None,
            stats: LoopStats::default(),
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.rates.sim_dt()
    }

    pub fn state(&self) -> &RigidBodyState {
        &self.plant.state
    }

    /// Latest measurement handed to the controller.
    pub fn measured(&self) -> &RigidBodyState {
        &self.measured
    }

    pub fn is_engaged(&self) -> bool {
        self.engaged
    }

    pub fn last_output(&self) -> Option<&ControllerOutput> {
        self.last_output.as_ref()
    }

    pub fn stats(&self) -> LoopStats {
        self.stats
    }

    /// Starts closed-loop control with fresh integrators, holding `psi_des`.
    pub fn engage(&mut self, psi_des: f64) {
        self.controller = ControllerState::new(psi_des);
        self.last_output = None;
        self.engaged = true;
        self.plant.motors_enabled = true;
    }

    /// Stops control and idles the actuators. Motors stay enabled only if
    /// `keep_motors` is set.
    pub fn disengage(&mut self, keep_motors: bool) {
        self.engaged = false;
        self.plant.commands = ActuatorCommands::idle();
        self.plant.motors_enabled = keep_motors;
    }

    /// One dynamics tick. Controller passes run first on ticks that are
    /// multiples of their divider; a failed pass leaves the previous
    /// commands in place.
    pub fn step(&mut self, reference: &TrajectorySample) -> Result<TickReport, DynamicsError> {
        let mut report = TickReport::default();
        let k = self.tick;
        let inner_due = k.is_multiple_of(self.rates.divider(self.rates.inner_hz));
        let outer_due = k.is_multiple_of(self.rates.divider(self.rates.outer_hz));

        if self.engaged && (inner_due || outer_due) {
            self.measured = self.sensors.measure(&self.plant.state);
        }
        if self.engaged && outer_due {
            let dt = 1.0 / self.rates.outer_hz as f64;
            match outer_loop_update(&self.controller_cfg, reference, &self.measured, &self.controller, dt) {
                Ok(next) => self.controller = next,
                Err(e) => report.control_error = Some(e),
            }
            report.outer_ran = true;
            self.stats.outer_runs += 1;
            if let Some(prev) = self.last_outer_tick {
                let gap = k - prev;
                self.stats.last_outer_gap = Some(gap);
                if gap != self.rates.divider(self.rates.outer_hz) {
                    self.stats.outer_gap_violations += 1;
                }
            }
            self.last_outer_tick = Some(k);
        }
        if self.engaged && inner_due && self.controller.demand.is_some() {
            let dt = 1.0 / self.rates.inner_hz as f64;
            match inner_loop_update(&self.controller_cfg, &self.measured, &self.controller, dt) {
                Ok((out, next)) => {
                    self.controller = next;
                    self.plant.commands = out.commands;
                    self.last_output = Some(out);
                }
                Err(e) => {
                    if report.control_error.is_none() {
                        report.control_error = Some(e);
                    }
                }
            }
            report.inner_ran = true;
            self.stats.inner_runs += 1;
        }

        self.plant.step(self.time(), self.rates.sim_dt())?;
        self.tick += 1;
        self.stats.dynamics_ticks += 1;
        Ok(report)
    }
}
