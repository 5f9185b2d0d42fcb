//! Mission runner: the closed loop plus the state machine, the simulated
//! autopilot, command intake, reference selection and safety monitors.

use hopper_core::gnc::EulerAngles;
use hopper_core::mission_fsm::{
    fsm_step, validate_command, CommandContext, CommandError, HeartbeatMonitor, MissionAction, MissionEvent,
    MissionState, RawCommand, Transition, ValidatedCommand,
};
use hopper_core::rigid_body::{DynamicsError, Vec3};
use hopper_core::trajectory::{rest_to_rest, PolySpline, TrajectoryError, TrajectorySample};
use thiserror::Error;

use crate::closed_loop::ClosedLoop;
use crate::config::{ConfigError, SimConfig};
use crate::metrics::{compute_metrics, MetricsError, RunMetrics};
use crate::reference::ReferenceTrack;
use crate::script::Script;
use crate::telemetry::TelemetryRecord;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("integration fault at t = {t:.3} s: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error("profile generation failed: {0}")]
    Profile(#[from] TrajectoryError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ended,
    Aborted,
    Killed,
    DurationCap,
    Fault(String),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Ended => 0,
            Outcome::Killed | Outcome::Fault(_) => 2,
            Outcome::Aborted => 3,
            Outcome::DurationCap => 4,
        }
    }
}

/// Where a command came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandSource {
    Script { line: usize },
    Operator { client: u64, seq: u64 },
    Internal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandRecord {
    pub t: f64,
    pub source: CommandSource,
    pub verb: &'static str,
    pub result: Result<(), String>,
}

#[derive(Debug, Clone, PartialEq)]
enum ActiveReference {
    /// Hold the given point at rest.
    Hold(Vec3),
    Profile(PolySpline),
    /// Mission track started at the given sim time.
    Track(f64),
}

pub struct Simulation {
    cfg: SimConfig,
    closed_loop: ClosedLoop,
    track: Option<ReferenceTrack>,
    script: Script,
    state: MissionState,
    active: ActiveReference,
    pending_acks: Vec<(f64, MissionEvent)>,
    phase_entered: f64,
    takeoff_target: Option<f64>,
    hold_since: Option<f64>,
    hold_achieved: bool,
    heartbeat: HeartbeatMonitor,
    last_heartbeat: Option<f64>,
    consecutive_faults: u32,
    timeout_fired: bool,
    touchdown_requested: bool,
    transitions: Vec<(f64, Transition)>,
    commands: Vec<CommandRecord>,
    telemetry: Vec<TelemetryRecord>,
    outcome: Option<Outcome>,
}

impl Simulation {
    pub fn new(cfg: SimConfig, track: Option<ReferenceTrack>, script: Script) -> Result<Self, SimError> {
        cfg.validate()?;
        let closed_loop = ClosedLoop::new(&cfg);
        let start = closed_loop.state().position;
        Ok(Self {
            heartbeat: HeartbeatMonitor::new(cfg.mission.heartbeat_timeout),
            cfg,
            closed_loop,
            track,
            script,
            state: MissionState::Init,
            active: ActiveReference::Hold(start),
            pending_acks: Vec::new(),
            phase_entered: 0.0,
            takeoff_target: None,
            hold_since: None,
            hold_achieved: false,
            last_heartbeat: None,
            consecutive_faults: 0,
            timeout_fired: false,
            touchdown_requested: false,
            transitions: Vec::new(),
            commands: Vec::new(),
            telemetry: Vec::new(),
            outcome: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.closed_loop.time()
    }

    pub fn mission_state(&self) -> MissionState {
        self.state
    }

    pub fn closed_loop(&self) -> &ClosedLoop {
        &self.closed_loop
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn telemetry(&self) -> &[TelemetryRecord] {
        &self.telemetry
    }

    pub fn transitions(&self) -> &[(f64, Transition)] {
        &self.transitions
    }

    pub fn commands(&self) -> &[CommandRecord] {
        &self.commands
    }

    pub fn altitude_hold_achieved(&self) -> bool {
        self.hold_achieved
    }

    /// `ts,state_from,event,state_to,accepted` lines with a header.
    pub fn transition_log(&self) -> String {
        let mut out = String::from("ts,state_from,event,state_to,accepted\n");
        for (t, tr) in &self.transitions {
            out.push_str(&tr.log_line(*t));
            out.push('\n');
        }
        out
    }

    pub fn metrics(&self) -> Result<RunMetrics, MetricsError> {
        compute_metrics(&self.telemetry, MissionState::Tracking, 1.0 / self.cfg.rates.telemetry_hz as f64)
    }

    fn context(&self) -> CommandContext {
        CommandContext {
            state: self.state,
            altitude: -self.closed_loop.state().position.z,
            altitude_hold_achieved: self.hold_achieved,
            max_altitude: self.cfg.ceiling(),
        }
    }

    /// Validates a command against the current state and applies it.
    pub fn submit(&mut self, command: &RawCommand, source: CommandSource) -> Result<ValidatedCommand, CommandError> {
        let t = self.time();
        let result = validate_command(command, &self.context());
        self.commands.push(CommandRecord {
            t,
            source,
            verb: command.verb(),
            result: result.as_ref().map(|_| ()).map_err(|e| e.to_string()),
        });
        match &result {
            Ok(ValidatedCommand::Heartbeat) => self.last_heartbeat = Some(t),
            Ok(ValidatedCommand::Request(action)) => self.request(*action, t),
            Ok(ValidatedCommand::Event {
                event,
                takeoff_altitude,
            }) => {
                if let Some(alt) = takeoff_altitude {
                    self.takeoff_target = Some(-alt);
                }
                self.apply_event(*event);
            }
            Err(e) => log::info!("t={t:.3} rejected {}: {e}", command.verb()),
        }
        result
    }

    fn request(&mut self, action: MissionAction, t: f64) {
        let ack = match action {
            MissionAction::RequestOffboard => MissionEvent::P1OffboardAck,
            MissionAction::RequestArm => MissionEvent::P2ArmAck,
            MissionAction::RequestDisarm => MissionEvent::P3DisarmAck,
            _ => return,
        };
        self.pending_acks.push((t + self.cfg.mission.ack_latency, ack));
    }

    fn internal_abort(&mut self, why: &str) {
        if matches!(
            self.state,
            MissionState::Takeoff | MissionState::Tracking | MissionState::Landing
        ) {
            log::warn!("t={:.3} internal abort: {why}", self.time());
            self.commands.push(CommandRecord {
                t: self.time(),
                source: CommandSource::Internal,
                verb: "abort",
                result: Ok(()),
            });
            self.apply_event(MissionEvent::C0Abort);
        }
    }

    /// Feeds one event to the state machine and performs its actions.
    pub fn apply_event(&mut self, event: MissionEvent) -> Transition {
        let t = self.time();
        let tr = fsm_step(self.state, event);
        self.transitions.push((t, tr.clone()));
        if !tr.accepted {
            return tr;
        }
        log::debug!("{}", tr.log_line(t));
        if tr.to != tr.from {
            self.phase_entered = t;
            self.timeout_fired = false;
        }
        self.state = tr.to;
        for action in &tr.actions {
            if let Err(e) = self.perform(*action) {
                self.outcome = Some(Outcome::Fault(e.to_string()));
            }
        }
        match (tr.to, event) {
            (MissionState::Ended, _) => {
                self.closed_loop.disengage(false);
                self.outcome = Some(Outcome::Ended);
            }
            (MissionState::Killed, _) => self.outcome = Some(Outcome::Killed),
            (MissionState::Aborted, MissionEvent::P3DisarmAck) => {
                self.closed_loop.disengage(false);
                self.outcome = Some(Outcome::Aborted);
            }
            _ => {}
        }
        tr
    }

    fn perform(&mut self, action: MissionAction) -> Result<(), SimError> {
        let t = self.time();
        let pos = self.closed_loop.measured().position;
        match action {
            MissionAction::EngageTakeoffProfile => {
                let truth = *self.closed_loop.state();
                let psi = EulerAngles::from_state(&truth).map(|e| e.psi).unwrap_or(0.0);
                let z = self.takeoff_target.unwrap_or(pos.z);
                let start = truth.position;
                let target = Vec3::new(start.x, start.y, z);
                self.active = ActiveReference::Profile(rest_to_rest(t, start, self.cfg.trajectory.takeoff_duration, target)?);
                self.hold_since = None;
                self.hold_achieved = false;
                self.closed_loop.engage(psi);
            }
            MissionAction::EngageTrajectory => {
                self.active = match &self.track {
                    Some(_) => ActiveReference::Track(t),
                    None => ActiveReference::Hold(self.current_reference().position()),
                };
            }
            MissionAction::EngageLandingProfile => {
                let height = (-pos.z).max(0.0);
                let duration = (height / self.cfg.trajectory.landing_speed).max(self.cfg.trajectory.min_landing_duration);
                let target = Vec3::new(pos.x, pos.y, 0.0);
                self.active = ActiveReference::Profile(rest_to_rest(t, pos, duration, target)?);
                self.touchdown_requested = false;
            }
            MissionAction::CutMotors => self.closed_loop.disengage(false),
            MissionAction::RequestOffboard | MissionAction::RequestArm | MissionAction::RequestDisarm => {
                self.request(action, t)
            }
        }
        Ok(())
    }

    pub fn current_reference(&self) -> TrajectorySample {
        let t = self.time();
        match &self.active {
            ActiveReference::Hold(p) => TrajectorySample::hold(t, *p),
            ActiveReference::Profile(spline) => spline.sample(t),
            ActiveReference::Track(t0) => {
                let track = self.track.as_ref().expect("track engaged without a reference");
                let mut s = track.sample(track.start_time() + (t - t0));
                s.t = t;
                s
            }
        }
    }

    fn run_monitors(&mut self) {
        let t = self.time();
        let m = self.cfg.mission;
        let truth = *self.closed_loop.state();

        if let Some(last) = self.last_heartbeat {
            if let Some(ev) = self.heartbeat.check(t - last) {
                if matches!(self.state, MissionState::Takeoff | MissionState::Tracking) {
                    self.apply_event(ev);
                }
            }
        }

        if self.state == MissionState::Takeoff {
            if let Some(z) = self.takeoff_target {
                if (truth.position.z - z).abs() < m.altitude_hold_tolerance {
                    let since = *self.hold_since.get_or_insert(t);
                    if t - since >= m.altitude_hold_time {
                        self.hold_achieved = true;
                    }
                } else {
                    self.hold_since = None;
                }
            }
        }

        let in_phase = t - self.phase_entered;
        let timed_out = match self.state {
            MissionState::Tracking => in_phase >= m.tracking_timeout,
            MissionState::Takeoff => in_phase >= m.takeoff_timeout && !self.hold_achieved,
            _ => false,
        };
        if timed_out && !self.timeout_fired {
            self.timeout_fired = true;
            self.apply_event(MissionEvent::T1Timeout);
        }

        if !self.cfg.arena.contains(&truth.position) {
            self.internal_abort("left the arena");
        }

        if matches!(self.state, MissionState::Landing | MissionState::Aborted)
            && !self.touchdown_requested
            && truth.position.z.abs() < m.touchdown_height
            && truth.velocity.norm() < m.touchdown_speed
        {
            self.touchdown_requested = true;
            self.closed_loop.disengage(false);
            self.request(MissionAction::RequestDisarm, t);
        }
    }

    /// Advances one dynamics tick. Returns the telemetry record when one
    /// was emitted on this tick.
    pub fn step(&mut self) -> Result<Option<TelemetryRecord>, SimError> {
        let t = self.time();

        let mut due = Vec::new();
        self.pending_acks.retain(|(when, ev)| {
            if *when <= t + 1e-12 {
                due.push(*ev);
                false
            } else {
                true
            }
        });
        for ev in due {
            self.apply_event(ev);
        }
        for entry in self.script.due(t) {
            // rejections are recorded in the command log
            let _ = self.submit(&entry.command, CommandSource::Script { line: entry.line });
        }
        if self.outcome.is_none() {
            self.run_monitors();
        }

        let reference = self.current_reference();
        let mut record = None;
        if self.closed_loop.tick().is_multiple_of(self.cfg.rates.divider(self.cfg.rates.telemetry_hz)) {
            let r = TelemetryRecord::capture(
                t,
                self.state,
                self.closed_loop.state(),
                &reference,
                &self.closed_loop.plant.applied(),
                &self.closed_loop.plant.commands,
                self.closed_loop.last_output(),
            );
            self.telemetry.push(r);
            record = Some(r);
        }
        if self.outcome.is_some() {
            return Ok(record);
        }

        let report = self
            .closed_loop
            .step(&reference)
            .map_err(|source| SimError::Dynamics { t, source })?;
        if let Some(e) = report.control_error {
            self.consecutive_faults += 1;
            log::debug!("t={t:.3} controller fault {}: {e}", self.consecutive_faults);
            if self.consecutive_faults >= self.cfg.mission.max_controller_faults {
                self.consecutive_faults = 0;
                self.internal_abort("repeated controller faults");
            }
        } else if report.inner_ran {
            self.consecutive_faults = 0;
        }

        if self.time() >= self.cfg.duration && self.outcome.is_none() {
            self.outcome = Some(Outcome::DurationCap);
        }
        Ok(record)
    }

    /// Runs until the mission finishes or the duration cap is hit.
    pub fn run(&mut self) -> Outcome {
        while self.outcome.is_none() {
            if let Err(e) = self.step() {
                log::error!("{e}");
                self.outcome = Some(Outcome::Fault(e.to_string()));
            }
        }
        self.outcome.clone().expect("loop exits with an outcome")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(script: &str) -> Simulation {
        Simulation::new(SimConfig::default(), None, Script::parse(script).unwrap()).unwrap()
    }

    #[test]
    fn acks_arrive_after_latency() {
        let mut s = sim("0 offboard\n");
        s.step().unwrap();
        assert_eq!(s.mission_state(), MissionState::Init);
        while s.time() < 0.049 {
            s.step().unwrap();
        }
        assert_eq!(s.mission_state(), MissionState::Init);
        for _ in 0..2 {
            s.step().unwrap();
        }
        assert_eq!(s.mission_state(), MissionState::OffboardRequested);
    }

    #[test]
    fn takeoff_then_kill() {
        let mut s = sim("0 offboard\n0.1 arm\n0.2 takeoff 1.0\n3 kill\n");
        let outcome = s.run();
        assert_eq!(outcome, Outcome::Killed);
        assert_eq!(outcome.exit_code(), 2);
        assert!(s.time() < 3.01);
        // climbing when the switch was thrown
        assert!(s.closed_loop().state().position.z < -0.2);
    }

    #[test]
    fn track_before_altitude_hold_is_rejected() {
        let mut s = sim("0 offboard\n0.1 arm\n0.2 takeoff 1.0\n1 track\n2 kill\n");
        s.run();
        let track = s.commands().iter().find(|c| c.verb == "track").unwrap();
        assert!(track.result.as_ref().unwrap_err().contains("not yet held"));
    }

    #[test]
    fn duration_cap() {
        let mut cfg = SimConfig::default();
        cfg.duration = 0.5;
        let mut s = Simulation::new(cfg, None, Script::default()).unwrap();
        assert_eq!(s.run(), Outcome::DurationCap);
        assert_eq!(s.telemetry().len(), 10);
    }
}
