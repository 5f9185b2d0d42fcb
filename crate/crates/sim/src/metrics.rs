//! Post-run tracking statistics over telemetry records.

use std::collections::BTreeMap;

use hopper_core::mission_fsm::MissionState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::TelemetryRecord;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no telemetry records in phase {0}")]
    EmptyPhase(MissionState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub phase: MissionState,
    pub samples: usize,
    /// sqrt(mean |e_p|^2), m.
    pub rmse: f64,
    pub rmse_axis: [f64; 3],
    pub max_error: f64,
    /// sqrt(mean |e_lambda|^2), rad.
    pub attitude_rmse: f64,
    pub max_yaw_error: f64,
    /// Fraction of samples with each channel saturated: gimbal in, gimbal out, thrust, yaw.
    pub saturation_duty: [f64; 4],
    /// Seconds spent in each mission state, from the telemetry period.
    pub phase_durations: BTreeMap<MissionState, f64>,
}

pub fn compute_metrics(records: &[TelemetryRecord], phase: MissionState, period: f64) -> Result<RunMetrics, MetricsError> {
    let in_phase: Vec<&TelemetryRecord> = records.iter().filter(|r| r.state == phase).collect();
    if in_phase.is_empty() {
        return Err(MetricsError::EmptyPhase(phase));
    }
    let n = in_phase.len() as f64;
    let mut sq = [0.0; 3];
    let mut att_sq = 0.0;
    let mut max_error: f64 = 0.0;
    let mut max_yaw: f64 = 0.0;
    let mut sat = [0usize; 4];
    for r in &in_phase {
        let e = [r.ep_x, r.ep_y, r.ep_z];
        for i in 0..3 {
            sq[i] += e[i] * e[i];
        }
        max_error = max_error.max(r.position_error_norm());
        att_sq += r.elam_x * r.elam_x + r.elam_y * r.elam_y + r.elam_z * r.elam_z;
        max_yaw = max_yaw.max(r.elam_z.abs());
        for (count, flag) in sat.iter_mut().zip([r.sat_gimbal_in, r.sat_gimbal_out, r.sat_thrust, r.sat_yaw]) {
            *count += flag as usize;
        }
    }
    let mut phase_durations = BTreeMap::new();
    for r in records {
        *phase_durations.entry(r.state).or_insert(0.0) += period;
    }
    Ok(RunMetrics {
        phase,
        samples: in_phase.len(),
        rmse: ((sq[0] + sq[1] + sq[2]) / n).sqrt(),
        rmse_axis: sq.map(|s| (s / n).sqrt()),
        max_error,
        attitude_rmse: (att_sq / n).sqrt(),
        max_yaw_error: max_yaw,
        saturation_duty: sat.map(|c| c as f64 / n),
        phase_durations,
    })
}
