//! Telemetry records and the CSV log.
//!
//! The struct field order is the CSV column order and the JSON key order on
//! the wire; changing it changes both formats.

use std::io::Write;

use hopper_core::gnc::{tracking_errors, ControllerOutput, EulerAngles};
use hopper_core::mission_fsm::MissionState;
use hopper_core::rigid_body::{ControlInputs, RigidBodyState};
use hopper_core::trajectory::TrajectorySample;
use hopper_core::ActuatorCommands;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub state: MissionState,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub ref_px: f64,
    pub ref_py: f64,
    pub ref_pz: f64,
    pub ref_vx: f64,
    pub ref_vy: f64,
    pub ref_vz: f64,
    pub ref_ax: f64,
    pub ref_ay: f64,
    pub ref_az: f64,
    pub gamma_in: f64,
    pub gamma_out: f64,
    pub thrust: f64,
    pub tau_delta_norm: f64,
    pub s_in: f64,
    pub s_out: f64,
    pub m_up: f64,
    pub m_dn: f64,
    pub ep_x: f64,
    pub ep_y: f64,
    pub ep_z: f64,
    pub ev_x: f64,
    pub ev_y: f64,
    pub ev_z: f64,
    pub elam_x: f64,
    pub elam_y: f64,
    pub elam_z: f64,
    pub sat_gimbal_in: bool,
    pub sat_gimbal_out: bool,
    pub sat_thrust: bool,
    pub sat_yaw: bool,
}

pub const CSV_COLUMNS: [&str; 44] = [
    "t",
    "state",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "phi",
    "theta",
    "psi",
    "wx",
    "wy",
    "wz",
    "ref_px",
    "ref_py",
    "ref_pz",
    "ref_vx",
    "ref_vy",
    "ref_vz",
    "ref_ax",
    "ref_ay",
    "ref_az",
    "gamma_in",
    "gamma_out",
    "thrust",
    "tau_delta_norm",
    "s_in",
    "s_out",
    "m_up",
    "m_dn",
    "ep_x",
    "ep_y",
    "ep_z",
    "ev_x",
    "ev_y",
    "ev_z",
    "elam_x",
    "elam_y",
    "elam_z",
    "sat_gimbal_in",
    "sat_gimbal_out",
    "sat_thrust",
    "sat_yaw",
];

impl TelemetryRecord {
    /// Builds a record from the true state. Euler angles fall back to NaN
    /// at the gimbal-lock singularity.
    pub fn capture(
        t: f64,
        state: MissionState,
        truth: &RigidBodyState,
        reference: &TrajectorySample,
        applied: &ControlInputs,
        commands: &ActuatorCommands,
        output: Option<&ControllerOutput>,
    ) -> Self {
        let euler = EulerAngles::from_state(truth).unwrap_or(EulerAngles {
            phi: f64::NAN,
            theta: f64::NAN,
            psi: f64::NAN,
        });
        let (ep, ev) = tracking_errors(reference, truth);
        let p = reference.position();
        let v = reference.velocity();
        let a = reference.acceleration();
        let elam = output.map(|o| o.attitude_error).unwrap_or_default();
        let sat = output.map(|o| o.saturation).unwrap_or_default();
        Self {
            t,
            state,
            px: truth.position.x,
            py: truth.position.y,
            pz: truth.position.z,
            vx: truth.velocity.x,
            vy: truth.velocity.y,
            vz: truth.velocity.z,
            phi: euler.phi,
            theta: euler.theta,
            psi: euler.psi,
            wx: truth.omega.x,
            wy: truth.omega.y,
            wz: truth.omega.z,
            ref_px: p.x,
            ref_py: p.y,
            ref_pz: p.z,
            ref_vx: v.x,
            ref_vy: v.y,
            ref_vz: v.z,
            ref_ax: a.x,
            ref_ay: a.y,
            ref_az: a.z,
            gamma_in: applied.gamma_in,
            gamma_out: applied.gamma_out,
            thrust: applied.thrust,
            tau_delta_norm: applied.tau_delta_norm,
            s_in: commands.s_in,
            s_out: commands.s_out,
            m_up: commands.m_up,
            m_dn: commands.m_dn,
            ep_x: ep.x,
            ep_y: ep.y,
            ep_z: ep.z,
            ev_x: ev.x,
            ev_y: ev.y,
            ev_z: ev.z,
            elam_x: elam.x,
            elam_y: elam.y,
            elam_z: elam.z,
            sat_gimbal_in: sat.gimbal_in,
            sat_gimbal_out: sat.gimbal_out,
            sat_thrust: sat.thrust,
            sat_yaw: sat.yaw,
        }
    }

    pub fn position_error_norm(&self) -> f64 {
        (self.ep_x * self.ep_x + self.ep_y * self.ep_y + self.ep_z * self.ep_z).sqrt()
    }
}

pub fn write_csv<W: Write>(out: W, records: &[TelemetryRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<TelemetryRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
