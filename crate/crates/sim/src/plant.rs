//! The simulated vehicle: actuator forward maps, servo dynamics and the
//! rigid body, with a flat floor at z = 0.

use hopper_core::actuators::{servo_lag_step, ActuatorCommands, ActuatorCurves};
use hopper_core::rigid_body::{rk4_step, BodyInputs, ControlInputs, DynamicsError, RigidBodyState, Vec3, VehicleParams};

use crate::config::{DisturbanceConfig, ServoConfig};

#[derive(Debug, Clone)]
pub struct Plant {
    pub state: RigidBodyState,
    pub params: VehicleParams,
    pub curves: ActuatorCurves,
    pub servo: ServoConfig,
    pub disturbance: DisturbanceConfig,
    /// Held until the next inner-loop update.
    pub commands: ActuatorCommands,
    /// Motors produce nothing while false (disarmed or killed).
    pub motors_enabled: bool,
    gimbal: (f64, f64),
    applied: ControlInputs,
}

impl Plant {
    pub fn new(
        state: RigidBodyState,
        params: VehicleParams,
        curves: ActuatorCurves,
        servo: ServoConfig,
        disturbance: DisturbanceConfig,
    ) -> Self {
        Self {
            state,
            params,
            curves,
            servo,
            disturbance,
            commands: ActuatorCommands::idle(),
            motors_enabled: false,
            gimbal: (0.0, 0.0),
            applied: ControlInputs::default(),
        }
    }

    /// Physical inputs applied during the last step.
    pub fn applied(&self) -> ControlInputs {
        self.applied
    }

    pub fn on_ground(&self) -> bool {
        self.state.position.z >= 0.0
    }

    fn external_force(&self, t: f64) -> Vec3 {
        if t >= self.disturbance.start {
            Vec3::from(self.disturbance.force)
        } else {
            Vec3::zeros()
        }
    }

    /// Advances from `t` to `t + dt` with the held commands.
    pub fn step(&mut self, t: f64, dt: f64) -> Result<(), DynamicsError> {
        let c = &self.commands;
        let max_rate = self.servo.max_rate_deg.map(f64::to_radians);
        let target_in = self.curves.servo_cmd_to_angle(c.s_in);
        let target_out = self.curves.servo_cmd_to_angle(c.s_out);
        self.gimbal = (
            servo_lag_step(self.gimbal.0, target_in, dt, self.servo.tau, max_rate),
            servo_lag_step(self.gimbal.1, target_out, dt, self.servo.tau, max_rate),
        );

        self.applied = if self.motors_enabled {
            ControlInputs {
                gamma_in: self.gimbal.0,
                gamma_out: self.gimbal.1,
                thrust: self.disturbance.thrust_multiplier * self.curves.motors_to_thrust(c.m_up, c.m_dn),
                tau_delta_norm: self.curves.motors_to_norm_yaw_accel(c.m_up, c.m_dn),
            }
        } else {
            ControlInputs {
                gamma_in: self.gimbal.0,
                gamma_out: self.gimbal.1,
                ..ControlInputs::default()
            }
        };

        let mut inputs = BodyInputs::from_controls(&self.applied, &self.params)?;
        inputs.external_force = self.external_force(t);
        let mut next = rk4_step(&self.state, &inputs, &self.params, dt)?;

        // Floor contact: no penetration, and the vehicle sticks until the
        // net force lifts it.
        if next.position.z >= 0.0 && next.velocity.z >= 0.0 {
            next.position.z = 0.0;
            next.velocity = Vec3::zeros();
            next.omega = Vec3::zeros();
            next.attitude = self.state.attitude;
        }
        self.state = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plant() -> Plant {
        Plant::new(
            RigidBodyState::default(),
            VehicleParams::default(),
            ActuatorCurves::default(),
            ServoConfig::default(),
            DisturbanceConfig::default(),
        )
    }

    #[test]
    fn rests_on_floor_when_disarmed() {
        let mut p = plant();
        for k in 0..1000 {
            p.step(k as f64 * 1e-3, 1e-3).unwrap();
        }
        assert_eq!(p.state, RigidBodyState::default());
        assert_eq!(p.applied().thrust, 0.0);
    }

    #[test]
    fn hover_throttle_holds_altitude() {
        let mut p = plant();
        p.state.position.z = -1.0;
        p.motors_enabled = true;
        let mean = p.curves.mean_for_thrust(p.params.hover_thrust());
        let c = &p.curves;
        // cancel the yaw offset with a small differential
        let dm = -(c.yaw_mbar_gain * mean + c.yaw_offset) / c.yaw_dm_gain;
        p.commands = ActuatorCommands {
            s_in: 0.0,
            s_out: 0.0,
            m_up: mean + 0.5 * dm,
            m_dn: mean - 0.5 * dm,
        };
        for k in 0..1000 {
            p.step(k as f64 * 1e-3, 1e-3).unwrap();
        }
        assert_relative_eq!(p.state.position.z, -1.0, epsilon = 1e-9);
        assert!(p.state.omega.norm() < 1e-9);
    }

    #[test]
    fn thrust_multiplier_scales_lift() {
        let mut p = plant();
        p.state.position.z = -1.0;
        p.motors_enabled = true;
        p.disturbance.thrust_multiplier = 0.5;
        p.commands.m_up = 0.8;
        p.commands.m_dn = 0.8;
        p.step(0.0, 1e-3).unwrap();
        assert_relative_eq!(p.applied().thrust, 0.5 * (26.45 * 0.8 - 0.3821), epsilon = 1e-12);
    }

    #[test]
    fn disturbance_switches_on_at_start() {
        let mut p = plant();
        p.state.position.z = -1.0;
        p.disturbance.force = [0.2, 0.0, 0.0];
        p.disturbance.start = 0.5;
        p.step(0.0, 1e-3).unwrap();
        assert_eq!(p.state.velocity.x, 0.0);
        p.step(0.5, 1e-3).unwrap();
        assert_relative_eq!(p.state.velocity.x, 0.2 / 1.6 * 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn servo_lag_is_applied_to_gimbal() {
        let mut p = plant();
        p.servo.tau = 0.05;
        p.commands.s_in = 1.0;
        p.step(0.0, 1e-3).unwrap();
        assert_relative_eq!(p.applied().gamma_in, std::f64::consts::FRAC_PI_6 * 0.02, epsilon = 1e-15);
    }
}
