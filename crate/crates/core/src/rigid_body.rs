//! Rigid-body dynamics of the gimballed hopper.
//!
//! Frames: the inertial frame is NED (z down) and the body z-axis runs
//! through the nozzle, so an upright hovering vehicle produces a thrust
//! vector with a negative third component. Attitude is carried as a
//! rotation matrix from body to inertial.

use std::f64::consts::FRAC_PI_6;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type RotMat = Matrix3<f64>;

/// Gimbal travel in either axis.
pub const GIMBAL_LIMIT: f64 = FRAC_PI_6;

/// Below this thrust magnitude the differential-torque direction falls back to -e3.
pub const ZERO_THRUST_EPS: f64 = 1e-9;

const GIMBAL_LOCK_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("gimbal angle {angle} rad outside +/-{limit} rad")]
    GimbalOutOfRange { angle: f64, limit: f64 },
    #[error("thrust must be finite and non-negative, got {0}")]
    InvalidThrust(f64),
    #[error("time step {0} s outside (0, 0.01]")]
    InvalidStep(f64),
    #[error("integration produced a non-finite state")]
    NonFinite,
    #[error("rotation matrix is degenerate (det = {0})")]
    Degenerate(f64),
    #[error("rotation matrix is too far from SO(3) (defect {0})")]
    NotARotation(f64),
    #[error("pitch {0} rad is too close to gimbal lock")]
    GimbalLock(f64),
}

pub fn e3() -> Vec3 {
    Vec3::z()
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub fn rot_x(angle: f64) -> RotMat {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> RotMat {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> RotMat {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Physical parameters of the vehicle. The inertia tensor is
/// `diag(j_perp, j_perp, j_zz)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub j_perp: f64,
    pub j_zz: f64,
    /// Gimbal pivot to centre of mass.
    pub arm_length: f64,
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1.6,
            j_perp: 0.375,
            j_zz: 0.01,
            arm_length: 0.26,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn inertia(&self) -> Vec3 {
        Vec3::new(self.j_perp, self.j_perp, self.j_zz)
    }

    pub fn is_valid(&self) -> bool {
        [self.mass, self.j_perp, self.j_zz, self.arm_length, self.gravity]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Full state: inertial position and velocity, body-to-inertial attitude,
/// and body angular rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: RotMat,
    pub omega: Vec3,
}

impl Default for RigidBodyState {
    fn default() -> Self {
        Self::at_rest(Vec3::zeros())
    }
}

impl RigidBodyState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            attitude: RotMat::identity(),
            omega: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
    }

    /// Inertial angular momentum `R J w`.
    pub fn angular_momentum(&self, params: &VehicleParams) -> Vec3 {
        self.attitude * self.omega.component_mul(&params.inertia())
    }

    pub fn rotational_energy(&self, params: &VehicleParams) -> f64 {
        0.5 * self.omega.dot(&self.omega.component_mul(&params.inertia()))
    }
}

/// Time derivative of [`RigidBodyState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: RotMat,
    pub omega: Vec3,
}

/// The four physical control degrees of freedom.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInputs {
    pub gamma_in: f64,
    pub gamma_out: f64,
    pub thrust: f64,
    /// Differential-thrust torque divided by `j_zz` (rad/s^2).
    pub tau_delta_norm: f64,
}

/// Everything held constant across one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyInputs {
    /// Thrust vector in the body frame.
    pub thrust: Vec3,
    /// Total body torque.
    pub torque: Vec3,
    pub tau_delta_norm: f64,
    /// Extra force applied at the centre of mass, inertial frame.
    pub external_force: Vec3,
}

impl BodyInputs {
    pub fn zero() -> Self {
        Self {
            thrust: Vec3::zeros(),
            torque: Vec3::zeros(),
            tau_delta_norm: 0.0,
            external_force: Vec3::zeros(),
        }
    }

    /// Builds the thrust vector and torque for a set of control inputs.
    pub fn from_controls(controls: &ControlInputs, params: &VehicleParams) -> Result<Self, DynamicsError> {
        let thrust = thrust_vector_body(controls.thrust, controls.gamma_in, controls.gamma_out)?;
        let torque = total_torque(&thrust, controls.tau_delta_norm, params);
        Ok(Self {
            thrust,
            torque,
            tau_delta_norm: controls.tau_delta_norm,
            external_force: Vec3::zeros(),
        })
    }
}

fn check_gimbal(angle: f64) -> Result<(), DynamicsError> {
    if !angle.is_finite() || angle.abs() > GIMBAL_LIMIT + 1e-12 {
        return Err(DynamicsError::GimbalOutOfRange {
            angle,
            limit: GIMBAL_LIMIT,
        });
    }
    Ok(())
}

/// Thrust vector in the body frame after the inner (x) then outer (y)
/// gimbal rotation of `-T e3`.
pub fn thrust_vector_body(thrust: f64, gamma_in: f64, gamma_out: f64) -> Result<Vec3, DynamicsError> {
    if !thrust.is_finite() || thrust < 0.0 {
        return Err(DynamicsError::InvalidThrust(thrust));
    }
    check_gimbal(gamma_in)?;
    check_gimbal(gamma_out)?;
    let (si, ci) = gamma_in.sin_cos();
    let (so, co) = gamma_out.sin_cos();
    Ok(-thrust * Vec3::new(so * ci, -si, co * ci))
}

/// Unit thrust direction, `-e3` when the thrust vanishes.
pub fn thrust_direction(u: &Vec3) -> Vec3 {
    let n = u.norm();
    if n < ZERO_THRUST_EPS {
        -e3()
    } else {
        u / n
    }
}

/// Axis of the differential-thrust torque: the thrust line, oriented out
/// through the nozzle, so it is `+e3` at zero gimbal and a positive
/// `tau_delta` spins the body positively about z.
pub fn differential_axis(u: &Vec3) -> Vec3 {
    -thrust_direction(u)
}

/// Body torque from thrust vectoring about the gimbal plus the
/// differential-thrust term along the thrust line.
pub fn total_torque(u: &Vec3, tau_delta_norm: f64, params: &VehicleParams) -> Vec3 {
    let tau_delta = params.j_zz * tau_delta_norm;
    params.arm_length * e3().cross(u) + tau_delta * differential_axis(u)
}

/// Newton-Euler equations without aerodynamics.
///
/// The translational equation keeps the force-torque coupling form: the
/// lateral thrust components are recovered from the torque after removing
/// the differential term. The coupling term is rotated into the inertial
/// frame, so for a torque consistent with `total_torque` the result is
/// exactly `g e3 + R u / m`.
pub fn state_derivative(s: &RigidBodyState, inputs: &BodyInputs, params: &VehicleParams) -> StateDerivative {
    let m = params.mass;
    let l = params.arm_length;
    let r = &s.attitude;
    let u = &inputs.thrust;

    let tau_delta = params.j_zz * inputs.tau_delta_norm;
    let vectoring = inputs.torque - tau_delta * differential_axis(u);
    let v_dot = params.gravity * e3() + (u.z / m) * (r * e3()) - (1.0 / (m * l)) * (r * e3().cross(&vectoring))
        + inputs.external_force / m;

    let j = params.inertia();
    let h = s.omega.component_mul(&j);
    let omega_dot = (-s.omega.cross(&h) + inputs.torque).component_div(&j);

    StateDerivative {
        position: s.velocity,
        velocity: v_dot,
        attitude: r * skew(&s.omega),
        omega: omega_dot,
    }
}

fn advance(s: &RigidBodyState, d: &StateDerivative, h: f64) -> RigidBodyState {
    RigidBodyState {
        position: s.position + d.position * h,
        velocity: s.velocity + d.velocity * h,
        attitude: s.attitude + d.attitude * h,
        omega: s.omega + d.omega * h,
    }
}

/// One classical Runge-Kutta step with inputs held, followed by
/// re-orthonormalization of the attitude.
pub fn rk4_step(
    s: &RigidBodyState,
    inputs: &BodyInputs,
    params: &VehicleParams,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let k1 = state_derivative(s, inputs, params);
    let k2 = state_derivative(&advance(s, &k1, 0.5 * dt), inputs, params);
    let k3 = state_derivative(&advance(s, &k2, 0.5 * dt), inputs, params);
    let k4 = state_derivative(&advance(s, &k3, dt), inputs, params);

    let w = dt / 6.0;
    let mut next = RigidBodyState {
        position: s.position + (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) * w,
        velocity: s.velocity + (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * w,
        attitude: s.attitude + (k1.attitude + 2.0 * k2.attitude + 2.0 * k3.attitude + k4.attitude) * w,
        omega: s.omega + (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega) * w,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    next.attitude = reorthonormalize(&next.attitude)?;
    Ok(next)
}

/// Frobenius norm of `R^T R - I`.
pub fn orthonormality_defect(r: &RotMat) -> f64 {
    (r.transpose() * r - RotMat::identity()).norm()
}

/// Nearest rotation via two rounds of the polar iteration `R <- (R + R^-T) / 2`.
pub fn reorthonormalize(r: &RotMat) -> Result<RotMat, DynamicsError> {
    let defect = orthonormality_defect(r);
    if !defect.is_finite() || defect > 1e-3 {
        let det = r.determinant();
        if det.abs() < 1e-9 || !det.is_finite() {
            return Err(DynamicsError::Degenerate(det));
        }
        return Err(DynamicsError::NotARotation(defect));
    }
    let mut out = *r;
    for _ in 0..2 {
        let inv_t = out
            .try_inverse()
            .ok_or(DynamicsError::Degenerate(out.determinant()))?
            .transpose();
        out = 0.5 * (out + inv_t);
    }
    Ok(out)
}

/// `R = Rz(psi) Ry(theta) Rx(phi)`.
pub fn rotation_from_euler_zyx(phi: f64, theta: f64, psi: f64) -> RotMat {
    rot_z(psi) * rot_y(theta) * rot_x(phi)
}

/// Inverse of [`rotation_from_euler_zyx`], returning `(phi, theta, psi)`.
pub fn euler_zyx_from_rotation(r: &RotMat) -> Result<(f64, f64, f64), DynamicsError> {
    let theta = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - GIMBAL_LOCK_MARGIN {
        return Err(DynamicsError::GimbalLock(theta));
    }
    let phi = r[(2, 1)].atan2(r[(2, 2)]);
    let psi = r[(1, 0)].atan2(r[(0, 0)]);
    Ok((phi, theta, psi))
}
