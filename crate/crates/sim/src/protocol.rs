//! JSON text frames exchanged with ground-station clients.
//!
//! Every frame is `{"type": "telemetry"|"cmd"|"ack"|"err", "seq": n, "payload": {...}}`.
//! Clients send `cmd` frames whose payload is a command such as
//! `{"cmd":"takeoff","alt":1.2}`; the server answers with `ack` or `err`
//! carrying the same `seq`, and broadcasts `telemetry` frames with its own
//! increasing counter.

use std::collections::BTreeMap;

use hopper_core::mission_fsm::{
    admissible_verbs, transition_target, MissionEvent, MissionState, RawCommand, ValidatedCommand,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::telemetry::TelemetryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameType {
    Telemetry,
    Cmd,
    Ack,
    Err,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: FrameType,
    pub seq: u64,
    pub payload: Value,
}

impl Envelope {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Commander,
    Observer,
}

/// A frame the server could not accept; `seq` is 0 when unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameError {
    pub seq: u64,
    pub reason: String,
}

pub fn telemetry_frame(seq: u64, record: &TelemetryRecord) -> Envelope {
    Envelope {
        kind: FrameType::Telemetry,
        seq,
        payload: serde_json::to_value(record).expect("record serializes"),
    }
}

pub fn command_frame(seq: u64, command: &RawCommand) -> Envelope {
    Envelope {
        kind: FrameType::Cmd,
        seq,
        payload: serde_json::to_value(command).expect("command serializes"),
    }
}

pub fn ack_frame(seq: u64, verb: &str, accepted: &ValidatedCommand, state: MissionState) -> Envelope {
    let effect = match accepted {
        ValidatedCommand::Event { event, .. } => json!({ "event": event.symbol() }),
        ValidatedCommand::Request(action) => json!({ "request": format!("{action:?}") }),
        ValidatedCommand::Heartbeat => json!({}),
    };
    let mut payload = json!({ "cmd": verb, "state": state });
    payload.as_object_mut().unwrap().extend(effect.as_object().unwrap().clone());
    Envelope {
        kind: FrameType::Ack,
        seq,
        payload,
    }
}

pub fn err_frame(seq: u64, reason: &str) -> Envelope {
    Envelope {
        kind: FrameType::Err,
        seq,
        payload: json!({ "reason": reason }),
    }
}

/// First frame on every connection.
pub fn hello_frame(role: Role) -> Envelope {
    Envelope {
        kind: FrameType::Ack,
        seq: 0,
        payload: json!({ "role": role, "table": transition_table() }),
    }
}

/// Parses a client frame into its sequence number and command.
pub fn parse_command(text: &str) -> Result<(u64, RawCommand), FrameError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| FrameError {
        seq: serde_json::from_str::<Value>(text)
            .ok()
            .and_then(|v| v.get("seq").and_then(Value::as_u64))
            .unwrap_or(0),
        reason: format!("malformed frame: {e}"),
    })?;
    if env.kind != FrameType::Cmd {
        return Err(FrameError {
            seq: env.seq,
            reason: format!("clients may only send cmd frames, got {:?}", env.kind).to_lowercase(),
        });
    }
    let command: RawCommand = serde_json::from_value(env.payload.clone()).map_err(|e| FrameError {
        seq: env.seq,
        reason: format!("bad command payload: {e}"),
    })?;
    // serde lets unit variants of a tagged enum carry stray fields
    let allowed: &[&str] = match command {
        RawCommand::Takeoff { .. } => &["cmd", "alt"],
        _ => &["cmd"],
    };
    if let Some(extra) = env
        .payload
        .as_object()
        .and_then(|o| o.keys().find(|k| !allowed.contains(&k.as_str())))
    {
        return Err(FrameError {
            seq: env.seq,
            reason: format!("bad command payload: unknown field `{extra}` for {}", command.verb()),
        });
    }
    Ok((env.seq, command))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub from: MissionState,
    pub event: String,
    pub to: MissionState,
    pub actions: Vec<String>,
}

/// The state machine in a form clients can gate their controls on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub states: Vec<MissionState>,
    pub terminal: Vec<MissionState>,
    pub events: Vec<String>,
    pub transitions: Vec<TableRow>,
    /// Verbs the server will consider in each state; altitude conditions
    /// on `takeoff` and `track` are still checked at submission.
    pub commands: BTreeMap<MissionState, Vec<String>>,
}

pub fn transition_table() -> TransitionTable {
    let mut transitions = Vec::new();
    for from in MissionState::ALL {
        for event in MissionEvent::ALL {
            if let Some((to, actions)) = transition_target(from, event) {
                transitions.push(TableRow {
                    from,
                    event: event.symbol().to_string(),
                    to,
                    actions: actions.iter().map(|a| format!("{a:?}")).collect(),
                });
            }
        }
    }
    TransitionTable {
        states: MissionState::ALL.to_vec(),
        terminal: MissionState::ALL.into_iter().filter(|s| s.is_terminal()).collect(),
        events: MissionEvent::ALL.iter().map(|e| e.symbol().to_string()).collect(),
        transitions,
        commands: MissionState::ALL
            .into_iter()
            .map(|s| (s, admissible_verbs(s).into_iter().map(str::to_string).collect()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_takeoff_command() {
        let (seq, cmd) = parse_command(r#"{"type":"cmd","seq":7,"payload":{"cmd":"takeoff","alt":1.2}}"#).unwrap();
        assert_eq!(seq, 7);
        assert_eq!(cmd, RawCommand::Takeoff { alt: 1.2 });
        assert_eq!(
            parse_command(&command_frame(3, &RawCommand::Heartbeat).to_text()).unwrap(),
            (3, RawCommand::Heartbeat)
        );
    }

    #[test]
    fn rejects_malformed_frames() {
        let e = parse_command("not json").unwrap_err();
        assert_eq!(e.seq, 0);
        let e = parse_command(r#"{"type":"cmd","seq":4,"payload":{"cmd":"fly"}}"#).unwrap_err();
        assert_eq!(e.seq, 4);
        assert!(e.reason.contains("bad command payload"));
        let e = parse_command(r#"{"type":"ack","seq":5,"payload":{}}"#).unwrap_err();
        assert_eq!(e.seq, 5);
        assert!(parse_command(r#"{"type":"cmd","seq":6,"payload":{"cmd":"takeoff"}}"#).is_err());
        assert!(parse_command(r#"{"type":"cmd","seq":6,"payload":{"cmd":"land","alt":1}}"#).is_err());
        assert!(parse_command(r#"{"type":"cmd","seq":6,"payload":{"cmd":"land"},"x":1}"#).is_err());
    }

    #[test]
    fn envelope_shape() {
        let v: Value = serde_json::from_str(&err_frame(9, "nope").to_text()).unwrap();
        assert_eq!(v, json!({"type": "err", "seq": 9, "payload": {"reason": "nope"}}));
        let ack = ack_frame(
            2,
            "takeoff",
            &ValidatedCommand::Event {
                event: MissionEvent::C1Takeoff,
                takeoff_altitude: Some(1.2),
            },
            MissionState::Takeoff,
        );
        assert_eq!(ack.payload, json!({"cmd": "takeoff", "state": "Takeoff", "event": "c1"}));
    }

    #[test]
    fn table_lists_every_accepted_pair() {
        let table = transition_table();
        assert_eq!(table.states.len(), 9);
        assert_eq!(table.terminal, vec![MissionState::Ended, MissionState::Killed]);
        assert!(table.transitions.iter().any(|r| r.from == MissionState::Armed
            && r.event == "c1"
            && r.to == MissionState::Takeoff
            && r.actions == ["EngageTakeoffProfile"]));
        assert_eq!(table.commands[&MissionState::Armed], ["heartbeat", "takeoff", "kill"]);
        assert_eq!(table.commands[&MissionState::Ended], ["heartbeat"]);
    }
}
