//! Cascaded trajectory-tracking controller.
//!
//! The outer loop turns position and velocity errors into a desired
//! acceleration, which fixes the axial thrust and a desired roll/pitch.
//! The inner loop runs an Euler-angle PID producing a normalized torque,
//! from which the thrust vector is rebuilt and split into gimbal angles,
//! thrust magnitude and differential-thrust yaw acceleration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuators::{ActuatorCommands, ActuatorCurves};
use crate::rigid_body::{
    e3, euler_zyx_from_rotation, rot_z, ControlInputs, DynamicsError, RigidBodyState, Vec3, VehicleParams,
    GIMBAL_LIMIT,
};
use crate::trajectory::TrajectorySample;

/// Smallest acceleration demand for which a thrust direction is defined.
pub const MIN_ACCEL_DEMAND: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("acceleration demand {0} m/s^2 too small to define an attitude")]
    DegenerateAcceleration(f64),
    #[error("acceleration demand requires tilting past horizontal")]
    ExcessiveTilt,
    #[error("thrust vector has zero magnitude")]
    ZeroThrust,
    #[error("allocation produced non-finite gimbal angles")]
    NonFiniteAllocation,
    #[error("attitude: {0}")]
    Attitude(#[from] DynamicsError),
}

/// Diagonal PID gains on position (entries of 3x3 diagonal matrices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositionGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    pub ki: [f64; 3],
}

impl Default for PositionGains {
    fn default() -> Self {
        Self {
            kp: [3.0, 3.0, 8.5],
            kd: [2.5, 2.5, 3.0],
            ki: [0.2, 0.2, 1.0],
        }
    }
}

impl PositionGains {
    pub fn is_valid(&self) -> bool {
        self.kp.iter().chain(&self.kd).chain(&self.ki).all(|g| g.is_finite() && *g > 0.0)
    }
}

/// Diagonal PID gains on roll, pitch and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttitudeGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    pub ki: [f64; 3],
}

impl AttitudeGains {
    /// Gains flown on the hardware. In the rigid-body model they leave the
    /// attitude loop slower than the position loop and the cascade diverges;
    /// kept for comparison runs.
    pub fn flight_test() -> Self {
        Self {
            kp: [0.7, 0.7, 0.4],
            kd: [0.4, 0.4, 0.2],
            ki: [0.0, 0.0, 0.1],
        }
    }

    /// Default tune: roll/pitch bandwidth well above the position loop,
    /// yaw critically damped around its integral.
    pub fn simulation() -> Self {
        Self {
            kp: [60.0, 60.0, 9.0],
            kd: [24.0, 24.0, 6.0],
            ki: [0.0, 0.0, 0.1],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kp.iter().chain(&self.kd).all(|g| g.is_finite() && *g > 0.0)
            && self.ki.iter().all(|g| g.is_finite() && *g >= 0.0)
    }
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self::simulation()
    }
}

fn diag(g: &[f64; 3], v: &Vec3) -> Vec3 {
    Vec3::new(g[0] * v.x, g[1] * v.y, g[2] * v.z)
}

/// ZYX Euler angles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub fn from_state(state: &RigidBodyState) -> Result<Self, DynamicsError> {
        let (phi, theta, psi) = euler_zyx_from_rotation(&state.attitude)?;
        Ok(Self { phi, theta, psi })
    }

    pub fn as_vec(&self) -> Vec3 {
        Vec3::new(self.phi, self.theta, self.psi)
    }

    /// `self - other`, each component wrapped to (-pi, pi].
    pub fn error_from(&self, other: &EulerAngles) -> Vec3 {
        (self.as_vec() - other.as_vec()).map(wrap_angle)
    }
}

/// Wraps to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `(e_p, e_v)`: reference minus state.
pub fn tracking_errors(reference: &TrajectorySample, state: &RigidBodyState) -> (Vec3, Vec3) {
    (reference.position() - state.position, reference.velocity() - state.velocity)
}

/// PID with acceleration feedforward and gravity compensation.
pub fn outer_loop_accel(
    e_p: &Vec3,
    e_v: &Vec3,
    integral_ep: &Vec3,
    accel_ff: &Vec3,
    gains: &PositionGains,
    gravity: f64,
) -> Vec3 {
    diag(&gains.kp, e_p) + diag(&gains.kd, e_v) + diag(&gains.ki, integral_ep) - gravity * e3() + accel_ff
}

/// Axial thrust and desired roll/pitch realising an acceleration demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttitudeDemand {
    /// Third thrust component, negative for upright thrust.
    pub u3: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl AttitudeDemand {
    pub fn angles(&self) -> EulerAngles {
        EulerAngles {
            phi: self.phi,
            theta: self.theta,
            psi: self.psi,
        }
    }
}

/// Splits `a` into `u3 = -m |a|` and the roll/pitch whose body z-axis,
/// at yaw `psi_des`, points along `-a`.
pub fn thrust_and_attitude(accel: &Vec3, psi_des: f64, mass: f64) -> Result<AttitudeDemand, ControlError> {
    let norm = accel.norm();
    if !(norm >= MIN_ACCEL_DEMAND) {
        return Err(ControlError::DegenerateAcceleration(norm));
    }
    let r3 = rot_z(psi_des).transpose() * (-accel / norm);
    if r3.z <= 0.0 {
        return Err(ControlError::ExcessiveTilt);
    }
    Ok(AttitudeDemand {
        u3: -mass * norm,
        phi: (-r3.y).clamp(-1.0, 1.0).asin(),
        theta: r3.x.atan2(r3.z),
        psi: psi_des,
    })
}

/// Euler-angle PID giving normalized torque `J^-1 tau`, with body rates as
/// the derivative signal.
pub fn attitude_pid(e_lam: &Vec3, omega: &Vec3, integral_elam: &Vec3, gains: &AttitudeGains) -> Vec3 {
    diag(&gains.kp, e_lam) - diag(&gains.kd, omega) + diag(&gains.ki, integral_elam)
}

/// Thrust vector whose gimbal torque yields the roll/pitch part of `tau_norm`.
pub fn reconstruct_thrust_vector(tau_norm: &Vec3, u3: f64, params: &VehicleParams) -> Vec3 {
    let k = params.j_perp / params.arm_length;
    Vec3::new(k * tau_norm.y, -k * tau_norm.x, u3)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SaturationFlags {
    pub gimbal_in: bool,
    pub gimbal_out: bool,
    pub thrust: bool,
    pub yaw: bool,
}

impl SaturationFlags {
    pub fn gimbal(&self) -> bool {
        self.gimbal_in || self.gimbal_out
    }

    pub fn any(&self) -> bool {
        self.gimbal() || self.thrust || self.yaw
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub inputs: ControlInputs,
    pub gimbal_in_saturated: bool,
    pub gimbal_out_saturated: bool,
}

/// Thrust magnitude, gimbal angles and yaw channel from a thrust vector
/// and normalized torque. Angles are clamped to the gimbal travel.
pub fn allocate_4dof(u: &Vec3, tau_norm: &Vec3) -> Result<Allocation, ControlError> {
    let thrust = u.norm();
    if !(thrust > 0.0) {
        return Err(ControlError::ZeroThrust);
    }
    let gamma_in = (u.y / thrust).clamp(-1.0, 1.0).asin();
    let lateral = (thrust * thrust - u.y * u.y).max(0.0).sqrt();
    let gamma_out = if lateral > 0.0 {
        -(u.x / lateral).clamp(-1.0, 1.0).asin()
    } else {
        0.0
    };
    if !gamma_in.is_finite() || !gamma_out.is_finite() {
        return Err(ControlError::NonFiniteAllocation);
    }
    let clamp = |g: f64| g.clamp(-GIMBAL_LIMIT, GIMBAL_LIMIT);
    Ok(Allocation {
        inputs: ControlInputs {
            gamma_in: clamp(gamma_in),
            gamma_out: clamp(gamma_out),
            thrust,
            tau_delta_norm: tau_norm.z,
        },
        gimbal_in_saturated: gamma_in.abs() > GIMBAL_LIMIT,
        gimbal_out_saturated: gamma_out.abs() > GIMBAL_LIMIT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub vehicle: VehicleParams,
    pub curves: ActuatorCurves,
    pub position: PositionGains,
    pub attitude: AttitudeGains,
    /// Per-axis bound on the position error integral (m s).
    pub position_integral_limit: f64,
    /// Per-axis bound on the attitude error integral (rad s).
    pub attitude_integral_limit: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            curves: ActuatorCurves::default(),
            position: PositionGains::default(),
            attitude: AttitudeGains::default(),
            position_integral_limit: 2.0,
            attitude_integral_limit: 1.0,
        }
    }
}

/// What one inner-loop pass produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    pub inputs: ControlInputs,
    pub commands: ActuatorCommands,
    pub saturation: SaturationFlags,
    pub tau_norm: Vec3,
    pub attitude_error: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub integral_ep: Vec3,
    pub integral_elam: Vec3,
    prev_ep: Option<Vec3>,
    prev_elam: Option<Vec3>,
    /// Yaw the outer loop asks for.
    pub psi_des: f64,
    pub accel: Option<Vec3>,
    pub demand: Option<AttitudeDemand>,
    pub last: Option<ControllerOutput>,
}

impl ControllerState {
    pub fn new(psi_des: f64) -> Self {
        Self {
            integral_ep: Vec3::zeros(),
            integral_elam: Vec3::zeros(),
            prev_ep: None,
            prev_elam: None,
            psi_des,
            accel: None,
            demand: None,
            last: None,
        }
    }

    fn saturation(&self) -> SaturationFlags {
        self.last.map(|o| o.saturation).unwrap_or_default()
    }
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// Trapezoidal update of a clamped integrator; frozen axes keep their value.
fn integrate(integral: &Vec3, prev: Option<Vec3>, e: &Vec3, dt: f64, limit: f64, frozen: [bool; 3]) -> Vec3 {
    let prev = prev.unwrap_or(*e);
    let mut next = *integral;
    for i in 0..3 {
        if !frozen[i] {
            next[i] = (next[i] + 0.5 * dt * (e[i] + prev[i])).clamp(-limit, limit);
        }
    }
    next
}

/// Outer loop: position PID to acceleration, then thrust and attitude demand.
pub fn outer_loop_update(
    cfg: &ControllerConfig,
    reference: &TrajectorySample,
    measured: &RigidBodyState,
    ctl: &ControllerState,
    dt: f64,
) -> Result<ControllerState, ControlError> {
    let (e_p, e_v) = tracking_errors(reference, measured);
    let sat = ctl.saturation();
    let lateral_frozen = sat.thrust || sat.gimbal();
    let integral_ep = integrate(
        &ctl.integral_ep,
        ctl.prev_ep,
        &e_p,
        dt,
        cfg.position_integral_limit,
        [lateral_frozen, lateral_frozen, sat.thrust],
    );
    let accel = outer_loop_accel(
        &e_p,
        &e_v,
        &integral_ep,
        &reference.acceleration(),
        &cfg.position,
        cfg.vehicle.gravity,
    );
    let demand = thrust_and_attitude(&accel, ctl.psi_des, cfg.vehicle.mass)?;
    Ok(ControllerState {
        integral_ep,
        prev_ep: Some(e_p),
        accel: Some(accel),
        demand: Some(demand),
        ..*ctl
    })
}

/// Inner loop: attitude PID, thrust-vector rebuild, allocation and the
/// inverse actuator maps. Requires a prior outer-loop pass.
pub fn inner_loop_update(
    cfg: &ControllerConfig,
    measured: &RigidBodyState,
    ctl: &ControllerState,
    dt: f64,
) -> Result<(ControllerOutput, ControllerState), ControlError> {
    let demand = ctl.demand.ok_or(ControlError::DegenerateAcceleration(0.0))?;
    let current = EulerAngles::from_state(measured)?;
    let e_lam = demand.angles().error_from(&current);

    let sat = ctl.saturation();
    let integral_elam = integrate(
        &ctl.integral_elam,
        ctl.prev_elam,
        &e_lam,
        dt,
        cfg.attitude_integral_limit,
        [sat.gimbal(), sat.gimbal(), sat.yaw],
    );
    let tau_norm = attitude_pid(&e_lam, &measured.omega, &integral_elam, &cfg.attitude);
    let u = reconstruct_thrust_vector(&tau_norm, demand.u3, &cfg.vehicle);
    let alloc = allocate_4dof(&u, &tau_norm)?;

    let s_in = cfg.curves.angle_to_servo_cmd(alloc.inputs.gamma_in);
    let s_out = cfg.curves.angle_to_servo_cmd(alloc.inputs.gamma_out);
    let motors = cfg
        .curves
        .inverse_motor_allocation(alloc.inputs.thrust, alloc.inputs.tau_delta_norm);

    let output = ControllerOutput {
        inputs: alloc.inputs,
        commands: ActuatorCommands {
            s_in: s_in.value,
            s_out: s_out.value,
            m_up: motors.m_up,
            m_dn: motors.m_dn,
        },
        saturation: SaturationFlags {
            gimbal_in: alloc.gimbal_in_saturated || s_in.saturated,
            gimbal_out: alloc.gimbal_out_saturated || s_out.saturated,
            thrust: motors.thrust_saturated,
            yaw: motors.yaw_saturated,
        },
        tau_norm,
        attitude_error: e_lam,
    };
    let next = ControllerState {
        integral_elam,
        prev_elam: Some(e_lam),
        last: Some(output),
        ..*ctl
    };
    Ok((output, next))
}

/// Both loops back to back at a single rate.
///
/// On error the caller should hold the previous commands; the state is
/// left untouched.
pub fn controller_step(
    cfg: &ControllerConfig,
    reference: &TrajectorySample,
    measured: &RigidBodyState,
    ctl: &ControllerState,
    dt: f64,
) -> Result<(ControllerOutput, ControllerState), ControlError> {
    let after_outer = outer_loop_update(cfg, reference, measured, ctl, dt)?;
    inner_loop_update(cfg, measured, &after_outer, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid_body::{rotation_from_euler_zyx, thrust_vector_body, total_torque};
    use approx::assert_relative_eq;

    fn hover_ref(z: f64) -> TrajectorySample {
        TrajectorySample::hold(0.0, Vec3::new(0.0, 0.0, z))
    }

    #[test]
    fn tracking_error_examples() {
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, -1.0));
        let (ep, ev) = tracking_errors(&hover_ref(-1.0), &s);
        assert_eq!((ep, ev), (Vec3::zeros(), Vec3::zeros()));

        let r = TrajectorySample::hold(0.0, Vec3::new(1.0, 0.0, 0.0));
        let (ep, ev) = tracking_errors(&r, &RigidBodyState::default());
        assert_eq!(ep, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(ev, Vec3::zeros());
    }

    #[test]
    fn outer_loop_examples() {
        let g = PositionGains::default();
        let z = Vec3::zeros();
        assert_eq!(outer_loop_accel(&z, &z, &z, &z, &g, 9.81), Vec3::new(0.0, 0.0, -9.81));
        let a = outer_loop_accel(&Vec3::new(0.1, 0.0, 0.0), &z, &z, &z, &g, 9.81);
        assert_relative_eq!(a, Vec3::new(0.3, 0.0, -9.81), epsilon = 1e-15);
        let a = outer_loop_accel(&z, &z, &z, &Vec3::new(0.0, 0.0, -1.0), &g, 9.81);
        assert_relative_eq!(a, Vec3::new(0.0, 0.0, -10.81), epsilon = 1e-15);
    }

    #[test]
    fn hover_demand() {
        let d = thrust_and_attitude(&Vec3::new(0.0, 0.0, -9.81), 0.0, 1.6).unwrap();
        assert_relative_eq!(d.u3, -15.696, epsilon = 1e-12);
        assert_eq!((d.phi, d.theta), (0.0, 0.0));
    }

    fn reproduced_accel(d: &AttitudeDemand, mass: f64) -> Vec3 {
        (d.u3 / mass) * (rotation_from_euler_zyx(d.phi, d.theta, d.psi) * e3())
    }

    #[test]
    fn lateral_demands_tilt_the_right_way() {
        let a = Vec3::new(1.0, 0.0, -9.81);
        let d = thrust_and_attitude(&a, 0.0, 1.6).unwrap();
        assert!((d.theta + 0.1016).abs() < 1e-4, "theta {}", d.theta);
        assert!(d.phi.abs() < 1e-15);
        assert_relative_eq!(reproduced_accel(&d, 1.6) + 9.81 * e3(), Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-9);

        let a = Vec3::new(0.0, 1.0, -9.81);
        let d = thrust_and_attitude(&a, 0.0, 1.6).unwrap();
        assert!((d.phi - 0.1016).abs() < 1e-4, "phi {}", d.phi);
        assert!(d.theta.abs() < 1e-15);
        assert_relative_eq!(reproduced_accel(&d, 1.6) + 9.81 * e3(), Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn yawed_extraction_is_exact() {
        let a = Vec3::new(0.7, -1.3, -9.0);
        let d = thrust_and_attitude(&a, 1.1, 1.6).unwrap();
        assert_relative_eq!(reproduced_accel(&d, 1.6), a, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_demands_are_errors() {
        assert!(matches!(
            thrust_and_attitude(&Vec3::new(0.0, 0.0, 0.05), 0.0, 1.6),
            Err(ControlError::DegenerateAcceleration(_))
        ));
        assert_eq!(
            thrust_and_attitude(&Vec3::new(0.0, 0.0, 5.0), 0.0, 1.6),
            Err(ControlError::ExcessiveTilt)
        );
    }

    #[test]
    fn attitude_pid_examples() {
        let g = AttitudeGains::flight_test();
        let z = Vec3::zeros();
        assert_eq!(attitude_pid(&z, &z, &z, &g), z);
        assert_relative_eq!(
            attitude_pid(&Vec3::new(0.1, 0.0, 0.0), &z, &z, &g),
            Vec3::new(0.07, 0.0, 0.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            attitude_pid(&z, &Vec3::new(0.0, 0.0, 0.5), &z, &g),
            Vec3::new(0.0, 0.0, -0.1),
            epsilon = 1e-15
        );
    }

    #[test]
    fn reconstruction_examples() {
        let p = VehicleParams::default();
        assert_eq!(
            reconstruct_thrust_vector(&Vec3::zeros(), -15.696, &p),
            Vec3::new(0.0, 0.0, -15.696)
        );
        let u = reconstruct_thrust_vector(&Vec3::new(0.07, 0.0, 0.0), -15.696, &p);
        assert!((u.y + 0.100961).abs() < 1e-6);
        assert_eq!(u.x, 0.0);
    }

    #[test]
    fn reconstruction_round_trips_through_torque_map() {
        let p = VehicleParams::default();
        let tau_norm = Vec3::new(0.3, -0.8, 0.0);
        let u = reconstruct_thrust_vector(&tau_norm, -15.0, &p);
        let tau = total_torque(&u, 0.0, &p);
        assert!((tau.x / p.j_perp - tau_norm.x).abs() < 1e-12);
        assert!((tau.y / p.j_perp - tau_norm.y).abs() < 1e-12);
    }

    #[test]
    fn allocation_examples() {
        let a = allocate_4dof(&Vec3::new(0.0, 0.0, -15.696), &Vec3::zeros()).unwrap();
        assert_relative_eq!(a.inputs.thrust, 15.696);
        assert_eq!((a.inputs.gamma_in, a.inputs.gamma_out, a.inputs.tau_delta_norm), (0.0, 0.0, 0.0));

        let u = thrust_vector_body(10.0, 0.2, -0.1).unwrap();
        let a = allocate_4dof(&u, &Vec3::zeros()).unwrap();
        assert!((a.inputs.gamma_in - 0.2).abs() < 1e-12);
        assert!((a.inputs.gamma_out + 0.1).abs() < 1e-12);
        assert!((a.inputs.thrust - 10.0).abs() < 1e-12);

        let a = allocate_4dof(&u, &Vec3::new(0.0, 0.0, 0.05)).unwrap();
        assert_eq!(a.inputs.tau_delta_norm, 0.05);

        assert_eq!(allocate_4dof(&Vec3::zeros(), &Vec3::zeros()), Err(ControlError::ZeroThrust));
    }

    #[test]
    fn allocation_clamps_gimbal() {
        let a = allocate_4dof(&Vec3::new(-8.0, 0.0, -8.0), &Vec3::zeros()).unwrap();
        assert!(a.gimbal_out_saturated);
        assert_eq!(a.inputs.gamma_out, GIMBAL_LIMIT);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(0.1 - 4.0 * PI), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn hover_step_commands_about_sixty_percent() {
        let cfg = ControllerConfig::default();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, -1.0));
        let (out, _) = controller_step(&cfg, &hover_ref(-1.0), &s, &ControllerState::default(), 0.02).unwrap();
        let hover_mean = (1.6 * 9.81 + 0.3821) / 26.45;
        assert!((out.commands.mean_throttle() - hover_mean).abs() < 1e-12);
        assert!((out.commands.m_up - 0.60786).abs() < 0.01);
        assert!((out.commands.m_dn - 0.60786).abs() < 0.01);
        assert_eq!((out.commands.s_in, out.commands.s_out), (0.0, 0.0));
        // zero yaw demand: the differential cancels the mean-throttle term of the yaw fit
        let residual = cfg.curves.motors_to_norm_yaw_accel(out.commands.m_up, out.commands.m_dn);
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn climb_reference_raises_throttle() {
        let cfg = ControllerConfig::default();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, -1.0));
        let ctl = ControllerState::default();
        let (hover, _) = controller_step(&cfg, &hover_ref(-1.0), &s, &ctl, 0.02).unwrap();
        let (climb, _) = controller_step(&cfg, &hover_ref(-1.1), &s, &ctl, 0.02).unwrap();
        assert!(climb.commands.mean_throttle() > hover.commands.mean_throttle());
        assert!(climb.inputs.thrust > hover.inputs.thrust);
    }

    #[test]
    fn yaw_step_produces_signed_differential() {
        let cfg = ControllerConfig::default();
        let s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, -1.0));
        let ctl = ControllerState::new(0.1);
        let (out, _) = controller_step(&cfg, &hover_ref(-1.0), &s, &ctl, 0.02).unwrap();
        let expected_tau = cfg.attitude.kp[2] * 0.1 + cfg.attitude.ki[2] * 0.1 * 0.02;
        assert!((out.inputs.tau_delta_norm - expected_tau).abs() < 1e-12);
        let mean = out.commands.mean_throttle();
        let expected_dm = (expected_tau - 0.4031 * mean - 0.02432) / 23.99;
        assert!((out.commands.differential_throttle() - expected_dm).abs() < 1e-12);
        let (zero, _) = controller_step(&cfg, &hover_ref(-1.0), &s, &ControllerState::new(0.0), 0.02).unwrap();
        assert!(out.commands.differential_throttle() > zero.commands.differential_throttle());
    }

    #[test]
    fn integrators_clamp_and_freeze() {
        let i = integrate(&Vec3::new(1.9, 0.0, 0.0), None, &Vec3::new(10.0, 1.0, 1.0), 0.1, 2.0, [false, true, false]);
        assert_eq!(i.x, 2.0);
        assert_eq!(i.y, 0.0);
        assert_relative_eq!(i.z, 0.1);
        let i = integrate(&Vec3::zeros(), Some(Vec3::new(1.0, 0.0, 0.0)), &Vec3::new(3.0, 0.0, 0.0), 0.5, 5.0, [false; 3]);
        assert_relative_eq!(i.x, 1.0);
    }

    #[test]
    fn outer_loop_error_leaves_no_partial_update() {
        let cfg = ControllerConfig::default();
        // reference far below in free fall: demand is near zero
        let mut r = hover_ref(0.0);
        r.derivatives[2] = Vec3::new(0.0, 0.0, 9.81);
        let s = RigidBodyState::at_rest(Vec3::zeros());
        let err = controller_step(&cfg, &r, &s, &ControllerState::default(), 0.02).unwrap_err();
        assert!(matches!(err, ControlError::DegenerateAcceleration(_)));
    }
}
