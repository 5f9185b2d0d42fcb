//! Identified maps between normalized autopilot commands and physical
//! actuation, with their inverses.

use std::f64::consts::FRAC_PI_6;

use serde::{Deserialize, Serialize};

/// Normalized commands as accepted by the autopilot output rail.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommands {
    /// Inner gimbal servo, [-1, 1].
    pub s_in: f64,
    /// Outer gimbal servo, [-1, 1].
    pub s_out: f64,
    /// Upper motor, [0, 1].
    pub m_up: f64,
    /// Lower motor, [0, 1].
    pub m_dn: f64,
}

impl ActuatorCommands {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn mean_throttle(&self) -> f64 {
        0.5 * (self.m_up + self.m_dn)
    }

    pub fn differential_throttle(&self) -> f64 {
        self.m_up - self.m_dn
    }
}

/// Static-test fits for thrust and differential yaw acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorCurves {
    /// N per unit mean throttle.
    pub thrust_gain: f64,
    /// N.
    pub thrust_offset: f64,
    /// rad/s^2 per unit differential throttle.
    pub yaw_dm_gain: f64,
    /// rad/s^2 per unit mean throttle.
    pub yaw_mbar_gain: f64,
    /// rad/s^2.
    pub yaw_offset: f64,
    /// Gimbal angle at full servo deflection, rad.
    pub servo_range: f64,
}

impl Default for ActuatorCurves {
    fn default() -> Self {
        Self {
            thrust_gain: 26.45,
            thrust_offset: -0.3821,
            yaw_dm_gain: 23.99,
            yaw_mbar_gain: 0.4031,
            yaw_offset: 0.02432,
            servo_range: FRAC_PI_6,
        }
    }
}

/// Result of an inverse map whose output may have been clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturated<T> {
    pub value: T,
    pub saturated: bool,
}

/// Motor commands from the inverse allocation with per-channel flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorAllocation {
    pub m_up: f64,
    pub m_dn: f64,
    /// Mean throttle had to be clamped.
    pub thrust_saturated: bool,
    /// The differential had to be shrunk to fit both motors in [0, 1].
    pub yaw_saturated: bool,
}

impl ActuatorCurves {
    pub fn is_valid(&self) -> bool {
        self.thrust_gain > 0.0
            && self.yaw_dm_gain > 0.0
            && self.servo_range > 0.0
            && [
                self.thrust_gain,
                self.thrust_offset,
                self.yaw_dm_gain,
                self.yaw_mbar_gain,
                self.yaw_offset,
                self.servo_range,
            ]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn servo_cmd_to_angle(&self, s: f64) -> f64 {
        self.servo_range * s.clamp(-1.0, 1.0)
    }

    pub fn angle_to_servo_cmd(&self, gamma: f64) -> Saturated<f64> {
        let s = gamma / self.servo_range;
        if s.abs() > 1.0 {
            Saturated {
                value: s.signum(),
                saturated: true,
            }
        } else {
            Saturated {
                value: s,
                saturated: false,
            }
        }
    }

    /// Thrust before the non-negativity clamp; negative at low throttle.
    pub fn raw_thrust(&self, mean: f64) -> f64 {
        self.thrust_gain * mean + self.thrust_offset
    }

    pub fn motors_to_thrust(&self, m_up: f64, m_dn: f64) -> f64 {
        self.raw_thrust(0.5 * (m_up + m_dn)).max(0.0)
    }

    pub fn motors_to_norm_yaw_accel(&self, m_up: f64, m_dn: f64) -> f64 {
        let diff = m_up - m_dn;
        let mean = 0.5 * (m_up + m_dn);
        self.yaw_dm_gain * diff + self.yaw_mbar_gain * mean + self.yaw_offset
    }

    /// Largest thrust reachable with both motors at full command.
    pub fn max_thrust(&self) -> f64 {
        self.raw_thrust(1.0)
    }

    /// Mean throttle that produces `thrust`, unclamped.
    pub fn mean_for_thrust(&self, thrust: f64) -> f64 {
        (thrust - self.thrust_offset) / self.thrust_gain
    }

    /// Motor commands for a thrust and normalized yaw acceleration.
    ///
    /// The mean is clamped to [0, 1] first; the differential is then
    /// shrunk symmetrically until both motors fit.
    pub fn inverse_motor_allocation(&self, thrust: f64, tau_delta_norm: f64) -> MotorAllocation {
        let raw_mean = self.mean_for_thrust(thrust.max(0.0));
        let mean = if raw_mean.is_nan() { 0.0 } else { raw_mean.clamp(0.0, 1.0) };
        let thrust_saturated = mean != raw_mean;

        let raw_diff = (tau_delta_norm - self.yaw_mbar_gain * mean - self.yaw_offset) / self.yaw_dm_gain;
        let half_room = mean.min(1.0 - mean);
        let raw_diff = if raw_diff.is_nan() { 0.0 } else { raw_diff };
        let diff = raw_diff.clamp(-2.0 * half_room, 2.0 * half_room);
        let yaw_saturated = diff != raw_diff;

        MotorAllocation {
            m_up: (mean + 0.5 * diff).clamp(0.0, 1.0),
            m_dn: (mean - 0.5 * diff).clamp(0.0, 1.0),
            thrust_saturated,
            yaw_saturated,
        }
    }
}

/// First-order servo response with an optional slew limit (rad/s).
/// A zero time constant passes the command straight through.
pub fn servo_lag_step(current: f64, commanded: f64, dt: f64, tau_servo: f64, max_rate: Option<f64>) -> f64 {
    if tau_servo <= 0.0 {
        return commanded;
    }
    let alpha = (dt / tau_servo).min(1.0);
    let mut delta = alpha * (commanded - current);
    if let Some(rate) = max_rate {
        let limit = rate * dt;
        delta = delta.clamp(-limit, limit);
    }
    current + delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn servo_examples() {
        let c = ActuatorCurves::default();
        assert_relative_eq!(c.servo_cmd_to_angle(1.0), FRAC_PI_6);
        assert_eq!(c.servo_cmd_to_angle(0.0), 0.0);
        let s = c.angle_to_servo_cmd(-FRAC_PI_6 / 2.0);
        assert_relative_eq!(s.value, -0.5, epsilon = 1e-15);
        assert!(!s.saturated);
    }

    #[test]
    fn servo_inverse_saturates_and_flags() {
        let c = ActuatorCurves::default();
        let s = c.angle_to_servo_cmd(0.7);
        assert_eq!(s.value, 1.0);
        assert!(s.saturated);
        let s = c.angle_to_servo_cmd(-0.7);
        assert_eq!(s.value, -1.0);
    }

    #[test]
    fn thrust_examples() {
        let c = ActuatorCurves::default();
        // mean throttle that balances 1.6 kg at g = 9.81
        let hover_mean = (1.6 * 9.81 + 0.3821) / 26.45;
        assert_relative_eq!(c.motors_to_thrust(hover_mean, hover_mean), 15.696, epsilon = 1e-12);
        assert!((hover_mean - 0.60786).abs() < 1e-5);
        assert_eq!(c.motors_to_thrust(0.0, 0.0), 0.0);
        assert_relative_eq!(c.raw_thrust(0.0), -0.3821);
        assert_relative_eq!(c.motors_to_thrust(1.0, 1.0), 26.0679, epsilon = 1e-12);
    }

    #[test]
    fn yaw_examples() {
        let c = ActuatorCurves::default();
        assert_relative_eq!(c.motors_to_norm_yaw_accel(0.0, 0.0), 0.02432);
        // mean 0.6, differential 0.1
        let v = c.motors_to_norm_yaw_accel(0.65, 0.55);
        assert_relative_eq!(v, 23.99 * 0.1 + 0.4031 * 0.6 + 0.02432, epsilon = 1e-12);
        assert_relative_eq!(v, 2.66518, epsilon = 1e-10);
        // root at zero mean
        let dm: f64 = -0.02432 / 23.99;
        assert!((dm + 0.0010138).abs() < 1e-7);
        assert!(c.motors_to_norm_yaw_accel(0.5 * dm, -0.5 * dm).abs() < 1e-15);
    }

    #[test]
    fn inverse_allocation_examples() {
        let c = ActuatorCurves::default();
        let mean = (15.696 + 0.3821) / 26.45;
        let tau = 0.4031 * mean + 0.02432;
        let a = c.inverse_motor_allocation(15.696, tau);
        assert!(!a.thrust_saturated && !a.yaw_saturated);
        assert_relative_eq!(a.m_up, mean, epsilon = 1e-15);
        assert_relative_eq!(a.m_dn, mean, epsilon = 1e-15);
        assert!((c.motors_to_thrust(a.m_up, a.m_dn) - 15.696).abs() < 1e-12);
        assert!((c.motors_to_norm_yaw_accel(a.m_up, a.m_dn) - tau).abs() < 1e-12);

        let mean0: f64 = 0.3821 / 26.45;
        assert!((mean0 - 0.0144461).abs() < 1e-7);
        let a = c.inverse_motor_allocation(0.0, 0.02432 + 0.4031 * mean0);
        assert!(!a.yaw_saturated);
        assert_relative_eq!(a.m_up - a.m_dn, 0.0, epsilon = 1e-15);
        assert_relative_eq!(a.m_up, mean0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_allocation_saturates_above_max_thrust() {
        let c = ActuatorCurves::default();
        let a = c.inverse_motor_allocation(30.0, 0.0);
        assert!(a.thrust_saturated);
        assert_eq!((a.m_up, a.m_dn), (1.0, 1.0));
        // no room for a differential at full throttle
        assert!(a.yaw_saturated);
    }

    #[test]
    fn differential_shrinks_to_fit() {
        let c = ActuatorCurves::default();
        let a = c.inverse_motor_allocation(20.0, 15.0);
        assert!(!a.thrust_saturated);
        assert!(a.yaw_saturated);
        assert_eq!(a.m_up, 1.0);
        assert_relative_eq!(0.5 * (a.m_up + a.m_dn), c.mean_for_thrust(20.0), epsilon = 1e-15);
    }

    #[test]
    fn servo_lag_examples() {
        assert_eq!(servo_lag_step(0.1, 0.4, 0.001, 0.0, None), 0.4);
        assert_eq!(servo_lag_step(0.3, 0.3, 0.001, 0.05, Some(10.0)), 0.3);

        let target = FRAC_PI_6;
        let mut g = 0.0;
        for _ in 0..50 {
            g = servo_lag_step(g, target, 0.001, 0.05, None);
        }
        let closed_form = target * (1.0 - (-1.0f64).exp());
        assert!((closed_form - 0.3310).abs() < 1e-3);
        assert!(((g - closed_form) / closed_form).abs() < 0.02, "g = {g}");
    }

    #[test]
    fn servo_slew_limit_caps_rate() {
        let rate = 600f64.to_radians();
        let g = servo_lag_step(0.0, 0.5, 0.001, 0.001, Some(rate));
        assert_relative_eq!(g, rate * 0.001, epsilon = 1e-15);
    }
}
