//! Run configuration, loaded from TOML. Every section is optional; missing
//! keys take the shipped defaults.

use std::path::{Path, PathBuf};

use hopper_core::gnc::{AttitudeGains, ControllerConfig, PositionGains};
use hopper_core::trajectory::Bounds;
use hopper_core::{ActuatorCurves, VehicleParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub vehicle: VehicleParams,
    pub actuators: ActuatorCurves,
    pub servo: ServoConfig,
    pub gains: GainsConfig,
    pub rates: Rates,
    pub trajectory: TrajectoryConfig,
    pub disturbance: DisturbanceConfig,
    pub noise: NoiseConfig,
    pub arena: Bounds,
    pub initial: InitialConfig,
    pub mission: MissionConfig,
    pub server: ServerConfig,
    pub seed: u64,
    /// Hard cap on simulated time, s.
    pub duration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            actuators: ActuatorCurves::default(),
            servo: ServoConfig::default(),
            gains: GainsConfig::default(),
            rates: Rates::default(),
            trajectory: TrajectoryConfig::default(),
            disturbance: DisturbanceConfig::default(),
            noise: NoiseConfig::default(),
            arena: Bounds::default(),
            initial: InitialConfig::default(),
            mission: MissionConfig::default(),
            server: ServerConfig::default(),
            seed: 0,
            duration: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoConfig {
    /// First-order time constant, s. Zero means ideal servos.
    pub tau: f64,
    /// Slew limit in deg/s; absent means unlimited.
    pub max_rate_deg: Option<f64>,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            max_rate_deg: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub position: PositionGains,
    pub attitude: AttitudeGains,
    pub position_integral_limit: f64,
    pub attitude_integral_limit: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            position: c.position,
            attitude: c.attitude,
            position_integral_limit: c.position_integral_limit,
            attitude_integral_limit: c.attitude_integral_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub sim_hz: u32,
    pub inner_hz: u32,
    pub outer_hz: u32,
    pub telemetry_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            sim_hz: 1000,
            inner_hz: 250,
            outer_hz: 50,
            telemetry_hz: 20,
        }
    }
}

impl Rates {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let Rates {
            sim_hz,
            inner_hz,
            outer_hz,
            telemetry_hz,
        } = *self;
        if [sim_hz, inner_hz, outer_hz, telemetry_hz].contains(&0) {
            return Err(ConfigError::Invalid("loop rates must be positive".into()));
        }
        if !(sim_hz >= inner_hz && inner_hz >= outer_hz) {
            return Err(ConfigError::Invalid(format!(
                "rates must satisfy sim >= inner >= outer (got {sim_hz}, {inner_hz}, {outer_hz})"
            )));
        }
        for (name, r) in [("inner", inner_hz), ("outer", outer_hz), ("telemetry", telemetry_hz)] {
            if sim_hz % r != 0 {
                return Err(ConfigError::Invalid(format!("{name} rate {r} Hz does not divide sim rate {sim_hz} Hz")));
            }
        }
        if 1.0 / sim_hz as f64 > 0.01 {
            return Err(ConfigError::Invalid("sim rate must be at least 100 Hz".into()));
        }
        Ok(())
    }

    pub fn sim_dt(&self) -> f64 {
        1.0 / self.sim_hz as f64
    }

    /// Sim ticks per execution of a loop running at `hz`.
    pub fn divider(&self, hz: u32) -> u64 {
        (self.sim_hz / hz) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Waypoint CSV (`t,x,y,z`) or discretized reference CSV. Relative
    /// paths resolve against the config file's directory.
    pub path: Option<PathBuf>,
    pub takeoff_duration: f64,
    /// Average descent speed for the landing profile, m/s.
    pub landing_speed: f64,
    pub min_landing_duration: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            path: None,
            takeoff_duration: 4.0,
            landing_speed: 0.3,
            min_landing_duration: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// Constant inertial force, N.
    pub force: [f64; 3],
    /// Sim time at which the force switches on, s.
    pub start: f64,
    /// Scales the identified thrust curve; 1 means nominal.
    pub thrust_multiplier: f64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            force: [0.0; 3],
            start: 0.0,
            thrust_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// m.
    pub position_std: f64,
    /// Per Euler angle, deg.
    pub attitude_std_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            position_std: 1e-4,
            attitude_std_deg: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// NED, m. z = 0 is the floor.
    pub position: [f64; 3],
    /// rad.
    pub yaw: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub tracking_timeout: f64,
    pub takeoff_timeout: f64,
    pub heartbeat_timeout: f64,
    /// Simulated autopilot acknowledgement latency, s.
    pub ack_latency: f64,
    pub altitude_hold_tolerance: f64,
    pub altitude_hold_time: f64,
    pub touchdown_height: f64,
    pub touchdown_speed: f64,
    /// Consecutive controller failures before an internal abort.
    pub max_controller_faults: u32,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            tracking_timeout: 120.0,
            takeoff_timeout: 20.0,
            heartbeat_timeout: 0.5,
            ack_latency: 0.05,
            altitude_hold_tolerance: 0.05,
            altitude_hold_time: 1.0,
            touchdown_height: 0.02,
            touchdown_speed: 0.05,
            max_controller_faults: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    /// Sim seconds per wall second when serving.
    pub realtime_factor: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            realtime_factor: 1.0,
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: SimConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if let (Some(traj), Some(dir)) = (cfg.trajectory.path.as_mut(), path.parent()) {
            if traj.is_relative() {
                *traj = dir.join(&*traj);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            vehicle: self.vehicle,
            curves: self.actuators,
            position: self.gains.position,
            attitude: self.gains.attitude,
            position_integral_limit: self.gains.position_integral_limit,
            attitude_integral_limit: self.gains.attitude_integral_limit,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        self.rates.validate()?;
        if !self.vehicle.is_valid() {
            return bad("vehicle parameters must be positive and finite");
        }
        if !self.actuators.is_valid() {
            return bad("actuator curves need positive thrust and yaw gains");
        }
        if !self.gains.position.is_valid() || !self.gains.attitude.is_valid() {
            return bad("controller gains must be finite, proportional and derivative terms positive");
        }
        if !(self.gains.position_integral_limit > 0.0 && self.gains.attitude_integral_limit > 0.0) {
            return bad("integral limits must be positive");
        }
        if !(self.servo.tau >= 0.0) || self.servo.max_rate_deg.is_some_and(|r| !(r > 0.0)) {
            return bad("servo time constant must be >= 0 and slew limit > 0");
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.trajectory.takeoff_duration > 0.0
            && self.trajectory.landing_speed > 0.0
            && self.trajectory.min_landing_duration > 0.0)
        {
            return bad("takeoff/landing profile parameters must be positive");
        }
        if !(0..3).all(|i| self.arena.min[i] < self.arena.max[i]) {
            return bad("arena min must be below max on every axis");
        }
        let p = self.initial.position;
        if !self.arena.contains(&hopper_core::rigid_body::Vec3::new(p[0], p[1], p[2])) {
            return bad("initial position lies outside the arena");
        }
        if !(self.disturbance.thrust_multiplier > 0.0) || self.disturbance.force.iter().any(|f| !f.is_finite()) {
            return bad("disturbance must be finite with a positive thrust multiplier");
        }
        if self.noise.enabled && !(self.noise.position_std >= 0.0 && self.noise.attitude_std_deg >= 0.0) {
            return bad("noise standard deviations must be non-negative");
        }
        let m = &self.mission;
        if [
            m.tracking_timeout,
            m.takeoff_timeout,
            m.heartbeat_timeout,
            m.altitude_hold_tolerance,
            m.touchdown_height,
            m.touchdown_speed,
        ]
        .iter()
        .any(|v| !(*v > 0.0))
            || !(m.ack_latency >= 0.0 && m.altitude_hold_time >= 0.0)
        {
            return bad("mission timeouts and tolerances must be positive");
        }
        if !(self.server.realtime_factor > 0.0) {
            return bad("realtime_factor must be positive");
        }
        Ok(())
    }

    /// Highest admissible takeoff altitude (height above the floor).
    pub fn ceiling(&self) -> f64 {
        -self.arena.min[2]
    }
}
