//! Flight-phase supervision.
//!
//! The machine advances only on validated operator commands, autopilot
//! acknowledgements and internally generated timeouts/failsafes. Anything
//! not in the transition table is rejected and leaves the state alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissionState {
    Init,
    OffboardRequested,
    Armed,
    Takeoff,
    Tracking,
    Landing,
    Ended,
    Aborted,
    Killed,
}

impl MissionState {
    pub const ALL: [MissionState; 9] = [
        MissionState::Init,
        MissionState::OffboardRequested,
        MissionState::Armed,
        MissionState::Takeoff,
        MissionState::Tracking,
        MissionState::Landing,
        MissionState::Ended,
        MissionState::Aborted,
        MissionState::Killed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, MissionState::Ended | MissionState::Killed)
    }

    /// States in which the vehicle may be airborne and the controller runs.
    pub fn is_flight(self) -> bool {
        matches!(
            self,
            MissionState::Takeoff | MissionState::Tracking | MissionState::Landing | MissionState::Aborted
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MissionState::Init => "Init",
            MissionState::OffboardRequested => "OffboardRequested",
            MissionState::Armed => "Armed",
            MissionState::Takeoff => "Takeoff",
            MissionState::Tracking => "Tracking",
            MissionState::Landing => "Landing",
            MissionState::Ended => "Ended",
            MissionState::Aborted => "Aborted",
            MissionState::Killed => "Killed",
        }
    }
}

impl fmt::Display for MissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissionEvent {
    /// p1: offboard request acknowledged by the autopilot.
    P1OffboardAck,
    /// p2: arm request acknowledged.
    P2ArmAck,
    /// p3: disarm request acknowledged.
    P3DisarmAck,
    /// c0: abort command validated.
    C0Abort,
    /// c1: takeoff command validated.
    C1Takeoff,
    /// c2: trajectory tracking command validated.
    C2Track,
    /// c3: landing command validated.
    C3Land,
    /// t1: timeout landing condition reached.
    T1Timeout,
    HeartbeatLost,
    KillSwitch,
}

impl MissionEvent {
    pub const ALL: [MissionEvent; 10] = [
        MissionEvent::P1OffboardAck,
        MissionEvent::P2ArmAck,
        MissionEvent::P3DisarmAck,
        MissionEvent::C0Abort,
        MissionEvent::C1Takeoff,
        MissionEvent::C2Track,
        MissionEvent::C3Land,
        MissionEvent::T1Timeout,
        MissionEvent::HeartbeatLost,
        MissionEvent::KillSwitch,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            MissionEvent::P1OffboardAck => "p1",
            MissionEvent::P2ArmAck => "p2",
            MissionEvent::P3DisarmAck => "p3",
            MissionEvent::C0Abort => "c0",
            MissionEvent::C1Takeoff => "c1",
            MissionEvent::C2Track => "c2",
            MissionEvent::C3Land => "c3",
            MissionEvent::T1Timeout => "t1",
            MissionEvent::HeartbeatLost => "heartbeat_lost",
            MissionEvent::KillSwitch => "kill",
        }
    }

    pub fn is_command(self) -> bool {
        matches!(
            self,
            MissionEvent::C0Abort
                | MissionEvent::C1Takeoff
                | MissionEvent::C2Track
                | MissionEvent::C3Land
                | MissionEvent::KillSwitch
        )
    }
}

impl fmt::Display for MissionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissionAction {
    RequestOffboard,
    RequestArm,
    RequestDisarm,
    EngageTakeoffProfile,
    EngageTrajectory,
    EngageLandingProfile,
    CutMotors,
}

impl MissionAction {
    pub fn is_engage(self) -> bool {
        matches!(
            self,
            MissionAction::EngageTakeoffProfile | MissionAction::EngageTrajectory | MissionAction::EngageLandingProfile
        )
    }
}

/// Outcome of feeding one event to the machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: MissionState,
    pub event: MissionEvent,
    pub to: MissionState,
    pub accepted: bool,
    pub actions: Vec<MissionAction>,
}

impl Transition {
    /// `ts,state_from,event,state_to,accepted`
    pub fn log_line(&self, ts: f64) -> String {
        format!("{ts:.3},{},{},{},{}", self.from, self.event, self.to, self.accepted)
    }
}

/// The transition table. `None` means the event is rejected in `state`.
pub fn transition_target(state: MissionState, event: MissionEvent) -> Option<(MissionState, &'static [MissionAction])> {
    use MissionAction::*;
    use MissionEvent::*;
    use MissionState::*;

    if state.is_terminal() {
        return None;
    }
    if event == KillSwitch {
        return Some((Killed, &[CutMotors]));
    }
    match (state, event) {
        (Init, P1OffboardAck) => Some((OffboardRequested, &[])),
        (OffboardRequested, P2ArmAck) => Some((Armed, &[])),
        (Armed, C1Takeoff) => Some((Takeoff, &[EngageTakeoffProfile])),
        (Takeoff, C2Track) => Some((Tracking, &[EngageTrajectory])),
        (Tracking, C3Land) | (Tracking, T1Timeout) => Some((Landing, &[EngageLandingProfile])),
        (Landing, P3DisarmAck) => Some((Ended, &[])),
        (Takeoff | Tracking | Landing, C0Abort) => Some((Aborted, &[EngageLandingProfile])),
        (Takeoff | Tracking, HeartbeatLost) => Some((Aborted, &[EngageLandingProfile])),
        // takeoff that never captured its altitude
        (Takeoff, T1Timeout) => Some((Aborted, &[EngageLandingProfile])),
        // disarmed after an aborted flight; stays aborted
        (Aborted, P3DisarmAck) => Some((Aborted, &[])),
        _ => None,
    }
}

/// Pure transition function.
pub fn fsm_step(state: MissionState, event: MissionEvent) -> Transition {
    match transition_target(state, event) {
        Some((to, actions)) => Transition {
            from: state,
            event,
            to,
            accepted: true,
            actions: actions.to_vec(),
        },
        None => Transition {
            from: state,
            event,
            to: state,
            accepted: false,
            actions: Vec::new(),
        },
    }
}

/// Emits `HeartbeatLost` once per loss episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeartbeatMonitor {
    pub threshold: f64,
    latched: bool,
}

impl HeartbeatMonitor {
    pub fn new(threshold: f64) -> Self {
        assert!(threshold > 0.0, "heartbeat threshold must be positive");
        Self {
            threshold,
            latched: false,
        }
    }

    pub fn check(&mut self, last_ack_age: f64) -> Option<MissionEvent> {
        if last_ack_age > self.threshold {
            if self.latched {
                None
            } else {
                self.latched = true;
                Some(MissionEvent::HeartbeatLost)
            }
        } else {
            self.latched = false;
            None
        }
    }

    pub fn is_lost(&self) -> bool {
        self.latched
    }
}

/// Stateless form: whether a heartbeat of this age counts as lost.
pub fn heartbeat_monitor(last_ack_age: f64, threshold: f64) -> Option<MissionEvent> {
    (last_ack_age > threshold).then_some(MissionEvent::HeartbeatLost)
}

/// Operator command as received, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawCommand {
    Offboard,
    Arm,
    Takeoff { alt: f64 },
    Track,
    Land,
    Abort,
    Kill,
    Heartbeat,
}

impl RawCommand {
    pub const VERBS: [&'static str; 8] = ["offboard", "arm", "takeoff", "track", "land", "abort", "kill", "heartbeat"];

    pub fn verb(&self) -> &'static str {
        match self {
            RawCommand::Offboard => "offboard",
            RawCommand::Arm => "arm",
            RawCommand::Takeoff { .. } => "takeoff",
            RawCommand::Track => "track",
            RawCommand::Land => "land",
            RawCommand::Abort => "abort",
            RawCommand::Kill => "kill",
            RawCommand::Heartbeat => "heartbeat",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("empty command")]
    Empty,
    #[error("unknown verb '{0}'")]
    UnknownVerb(String),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("'{verb}' not allowed in state {state}: {reason}")]
    Inadmissible {
        verb: &'static str,
        state: MissionState,
        reason: String,
    },
}

impl FromStr for RawCommand {
    type Err = CommandError;

    /// Parses the text form, e.g. `takeoff 1.2`.
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.split_whitespace();
        let verb = parts.next().ok_or(CommandError::Empty)?;
        let args: Vec<&str> = parts.collect();
        let no_args = |cmd: RawCommand| {
            if args.is_empty() {
                Ok(cmd)
            } else {
                Err(CommandError::Malformed(format!("'{verb}' takes no arguments")))
            }
        };
        match verb {
            "offboard" => no_args(RawCommand::Offboard),
            "arm" => no_args(RawCommand::Arm),
            "track" => no_args(RawCommand::Track),
            "land" => no_args(RawCommand::Land),
            "abort" => no_args(RawCommand::Abort),
            "kill" => no_args(RawCommand::Kill),
            "heartbeat" => no_args(RawCommand::Heartbeat),
            "takeoff" => match args.as_slice() {
                [alt] => alt
                    .parse::<f64>()
                    .map(|alt| RawCommand::Takeoff { alt })
                    .map_err(|e| CommandError::Malformed(format!("takeoff altitude '{alt}': {e}"))),
                _ => Err(CommandError::Malformed("takeoff expects one altitude in metres".into())),
            },
            other => Err(CommandError::UnknownVerb(other.to_string())),
        }
    }
}

/// What the mission knows when it judges a command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandContext {
    pub state: MissionState,
    /// Height above ground, m (positive up).
    pub altitude: f64,
    /// Takeoff altitude has been held within tolerance long enough.
    pub altitude_hold_achieved: bool,
    /// Highest admissible takeoff altitude, m.
    pub max_altitude: f64,
}

/// A command that passed validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidatedCommand {
    /// Feeds the state machine directly.
    Event { event: MissionEvent, takeoff_altitude: Option<f64> },
    /// Asks the autopilot for a mode change; its acknowledgement arrives later as an event.
    Request(MissionAction),
    Heartbeat,
}

fn inadmissible(verb: &'static str, state: MissionState, reason: impl Into<String>) -> CommandError {
    CommandError::Inadmissible {
        verb,
        state,
        reason: reason.into(),
    }
}

/// Structural and state-dependent checks shared by scripted and live commands.
pub fn validate_command(cmd: &RawCommand, ctx: &CommandContext) -> Result<ValidatedCommand, CommandError> {
    use MissionState::*;
    let state = ctx.state;
    let verb = cmd.verb();
    let event = |event| ValidatedCommand::Event {
        event,
        takeoff_altitude: None,
    };
    match cmd {
        RawCommand::Heartbeat => Ok(ValidatedCommand::Heartbeat),
        RawCommand::Kill if state.is_terminal() => Err(inadmissible(verb, state, "mission already finished")),
        RawCommand::Kill => Ok(event(MissionEvent::KillSwitch)),
        RawCommand::Offboard if state == Init => Ok(ValidatedCommand::Request(MissionAction::RequestOffboard)),
        RawCommand::Offboard => Err(inadmissible(verb, state, "offboard is requested from Init")),
        RawCommand::Arm if state == OffboardRequested => Ok(ValidatedCommand::Request(MissionAction::RequestArm)),
        RawCommand::Arm => Err(inadmissible(verb, state, "arming needs an acknowledged offboard mode")),
        RawCommand::Takeoff { alt } => {
            if !alt.is_finite() || *alt <= 0.0 {
                return Err(CommandError::Malformed(format!("takeoff altitude {alt} must be positive")));
            }
            if state != Armed {
                return Err(inadmissible(verb, state, "vehicle is not armed"));
            }
            if *alt <= ctx.altitude {
                return Err(inadmissible(verb, state, format!("target {alt} m is not above current altitude {:.3} m", ctx.altitude)));
            }
            if *alt > ctx.max_altitude {
                return Err(inadmissible(verb, state, format!("target {alt} m exceeds ceiling {} m", ctx.max_altitude)));
            }
            Ok(ValidatedCommand::Event {
                event: MissionEvent::C1Takeoff,
                takeoff_altitude: Some(*alt),
            })
        }
        RawCommand::Track if state != Takeoff => Err(inadmissible(verb, state, "tracking starts from Takeoff")),
        RawCommand::Track if !ctx.altitude_hold_achieved => {
            Err(inadmissible(verb, state, "takeoff altitude not yet held"))
        }
        RawCommand::Track => Ok(event(MissionEvent::C2Track)),
        RawCommand::Land if state == Tracking => Ok(event(MissionEvent::C3Land)),
        RawCommand::Land => Err(inadmissible(verb, state, "landing is commanded from Tracking")),
        RawCommand::Abort if matches!(state, Takeoff | Tracking | Landing) => Ok(event(MissionEvent::C0Abort)),
        RawCommand::Abort => Err(inadmissible(verb, state, "nothing to abort")),
    }
}

/// Commands admissible in `state` ignoring altitude predicates; the
/// exported form of the table used for operator-side gating.
pub fn admissible_verbs(state: MissionState) -> Vec<&'static str> {
    use MissionState::*;
    let mut verbs = vec!["heartbeat"];
    match state {
        Init => verbs.push("offboard"),
        OffboardRequested => verbs.push("arm"),
        Armed => verbs.push("takeoff"),
        Takeoff => verbs.extend(["track", "abort"]),
        Tracking => verbs.extend(["land", "abort"]),
        Landing => verbs.push("abort"),
        _ => {}
    }
    if !state.is_terminal() {
        verbs.push("kill");
    }
    verbs
}

#[cfg(test)]
mod tests {
    use super::*;
    use MissionEvent::*;
    use MissionState::*;

    fn ctx(state: MissionState) -> CommandContext {
        CommandContext {
            state,
            altitude: 0.0,
            altitude_hold_achieved: false,
            max_altitude: 2.5,
        }
    }

    #[test]
    fn takeoff_from_armed() {
        let t = fsm_step(Armed, C1Takeoff);
        assert!(t.accepted);
        assert_eq!(t.to, Takeoff);
        assert_eq!(t.actions, vec![MissionAction::EngageTakeoffProfile]);
    }

    #[test]
    fn takeoff_before_arming_is_rejected() {
        let t = fsm_step(Init, C1Takeoff);
        assert!(!t.accepted);
        assert_eq!(t.to, Init);
        assert!(t.actions.is_empty());
    }

    #[test]
    fn timeout_in_tracking_lands() {
        let t = fsm_step(Tracking, T1Timeout);
        assert_eq!((t.to, t.actions.clone()), (Landing, vec![MissionAction::EngageLandingProfile]));
    }

    #[test]
    fn heartbeat_loss_aborts_flight_but_not_landing() {
        assert_eq!(fsm_step(Tracking, HeartbeatLost).to, Aborted);
        assert_eq!(fsm_step(Takeoff, HeartbeatLost).to, Aborted);
        assert!(!fsm_step(Landing, HeartbeatLost).accepted);
    }

    #[test]
    fn kill_cuts_motors() {
        let t = fsm_step(Tracking, KillSwitch);
        assert_eq!(t.to, Killed);
        assert_eq!(t.actions, vec![MissionAction::CutMotors]);
    }

    #[test]
    fn log_line_format() {
        assert_eq!(fsm_step(Armed, C1Takeoff).log_line(12.5), "12.500,Armed,c1,Takeoff,true");
    }

    #[test]
    fn heartbeat_examples() {
        assert_eq!(heartbeat_monitor(0.1, 0.5), None);
        assert_eq!(heartbeat_monitor(0.6, 0.5), Some(HeartbeatLost));

        let mut m = HeartbeatMonitor::new(0.5);
        assert_eq!(m.check(0.1), None);
        assert_eq!(m.check(0.6), Some(HeartbeatLost));
        assert_eq!(m.check(0.7), None);
        assert_eq!(m.check(5.0), None);
        assert_eq!(m.check(0.0), None);
        assert_eq!(m.check(0.9), Some(HeartbeatLost));
    }

    #[test]
    fn parse_text_commands() {
        assert_eq!("takeoff 1.2".parse::<RawCommand>(), Ok(RawCommand::Takeoff { alt: 1.2 }));
        assert_eq!("  track ".parse::<RawCommand>(), Ok(RawCommand::Track));
        assert!(matches!("jump".parse::<RawCommand>(), Err(CommandError::UnknownVerb(_))));
        assert!(matches!("takeoff".parse::<RawCommand>(), Err(CommandError::Malformed(_))));
        assert!(matches!("takeoff high".parse::<RawCommand>(), Err(CommandError::Malformed(_))));
        assert!(matches!("land now".parse::<RawCommand>(), Err(CommandError::Malformed(_))));
        assert_eq!("".parse::<RawCommand>(), Err(CommandError::Empty));
    }

    #[test]
    fn validate_examples() {
        let v = validate_command(&RawCommand::Takeoff { alt: 1.2 }, &ctx(Armed)).unwrap();
        assert_eq!(
            v,
            ValidatedCommand::Event {
                event: C1Takeoff,
                takeoff_altitude: Some(1.2)
            }
        );

        let mut c = ctx(Takeoff);
        c.altitude = 0.9;
        let err = validate_command(&RawCommand::Track, &c).unwrap_err();
        assert!(matches!(err, CommandError::Inadmissible { .. }));
        assert!(err.to_string().contains("not yet held"));
        c.altitude_hold_achieved = true;
        assert_eq!(
            validate_command(&RawCommand::Track, &c),
            Ok(ValidatedCommand::Event {
                event: C2Track,
                takeoff_altitude: None
            })
        );
    }

    #[test]
    fn takeoff_below_current_altitude_is_rejected() {
        let mut c = ctx(Armed);
        c.altitude = 1.5;
        assert!(validate_command(&RawCommand::Takeoff { alt: 1.2 }, &c).is_err());
        assert!(validate_command(&RawCommand::Takeoff { alt: 3.0 }, &ctx(Armed)).is_err());
        assert!(matches!(
            validate_command(&RawCommand::Takeoff { alt: -1.0 }, &ctx(Armed)),
            Err(CommandError::Malformed(_))
        ));
    }

    #[test]
    fn requests_and_heartbeat() {
        assert_eq!(
            validate_command(&RawCommand::Offboard, &ctx(Init)),
            Ok(ValidatedCommand::Request(MissionAction::RequestOffboard))
        );
        assert_eq!(
            validate_command(&RawCommand::Arm, &ctx(OffboardRequested)),
            Ok(ValidatedCommand::Request(MissionAction::RequestArm))
        );
        assert!(validate_command(&RawCommand::Arm, &ctx(Init)).is_err());
        assert_eq!(validate_command(&RawCommand::Heartbeat, &ctx(Killed)), Ok(ValidatedCommand::Heartbeat));
        assert!(validate_command(&RawCommand::Kill, &ctx(Ended)).is_err());
    }

    #[test]
    fn admissible_verbs_agree_with_validation() {
        let commands = [
            RawCommand::Offboard,
            RawCommand::Arm,
            RawCommand::Takeoff { alt: 1.0 },
            RawCommand::Track,
            RawCommand::Land,
            RawCommand::Abort,
            RawCommand::Kill,
            RawCommand::Heartbeat,
        ];
        for state in MissionState::ALL {
            let c = CommandContext {
                state,
                altitude: 0.0,
                altitude_hold_achieved: true,
                max_altitude: 2.5,
            };
            let verbs = admissible_verbs(state);
            for cmd in &commands {
                assert_eq!(
                    validate_command(cmd, &c).is_ok(),
                    verbs.contains(&cmd.verb()),
                    "{state} {}",
                    cmd.verb()
                );
            }
        }
    }
}
