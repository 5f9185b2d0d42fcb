//! WebSocket front end. Network threads talk to the simulation only through
//! two queues: validated-later commands inbound, telemetry and replies
//! outbound.
//!
//! Connect with `ws://host:port/?role=commander` or `?role=observer`
//! (the default). Only one commander may be connected at a time.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use hopper_core::mission_fsm::RawCommand;
use tungstenite::handshake::server::{Request, Response};
use tungstenite::{Message, WebSocket};

use crate::protocol::{ack_frame, err_frame, hello_frame, parse_command, telemetry_frame, Envelope, Role};
use crate::simulation::{CommandSource, Outcome, Simulation};
use crate::telemetry::TelemetryRecord;

/// A command from the commander, not yet validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub client: u64,
    pub seq: u64,
    pub command: RawCommand,
}

#[derive(Debug, Clone)]
pub enum Outbound {
    Telemetry(TelemetryRecord),
    Reply { client: u64, frame: Envelope },
}

enum HubMsg {
    Register {
        id: u64,
        role: Role,
        tx: Sender<String>,
        accepted: Sender<bool>,
    },
    Unregister(u64),
    Out(Outbound),
}

pub struct ServerHandle {
    pub local_addr: SocketAddr,
    pub inbound: Receiver<Inbound>,
    pub outbound: Sender<Outbound>,
}

/// Binds and starts the acceptor and hub threads.
pub fn start(addr: &str) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local_addr = listener.local_addr()?;
    let (in_tx, in_rx) = unbounded::<Inbound>();
    let (out_tx, out_rx) = unbounded::<Outbound>();
    let (hub_tx, hub_rx) = unbounded::<HubMsg>();

    let forward = hub_tx.clone();
    thread::spawn(move || {
        for msg in out_rx {
            if forward.send(HubMsg::Out(msg)).is_err() {
                break;
            }
        }
    });
    thread::spawn(move || hub(hub_rx));
    thread::spawn(move || {
        let mut next_id = 1u64;
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let (id, hub_tx, in_tx) = (next_id, hub_tx.clone(), in_tx.clone());
            next_id += 1;
            thread::spawn(move || {
                if let Err(e) = serve_client(id, stream, hub_tx, in_tx) {
                    log::debug!("client {id}: {e}");
                }
            });
        }
    });

    Ok(ServerHandle {
        local_addr,
        inbound: in_rx,
        outbound: out_tx,
    })
}

/// Runs `sim` to completion while serving `handle`. Operator commands are
/// applied between dynamics ticks. With `realtime_factor` set, the loop is
/// paced so sim time advances that many times faster than wall time.
pub fn run_live(sim: &mut Simulation, handle: &ServerHandle, realtime_factor: Option<f64>) -> Outcome {
    let started = Instant::now();
    let t0 = sim.time();
    loop {
        for msg in handle.inbound.try_iter() {
            let verb = msg.command.verb();
            let source = CommandSource::Operator {
                client: msg.client,
                seq: msg.seq,
            };
            let frame = match sim.submit(&msg.command, source) {
                Ok(accepted) => ack_frame(msg.seq, verb, &accepted, sim.mission_state()),
                Err(e) => err_frame(msg.seq, &e.to_string()),
            };
            let _ = handle.outbound.send(Outbound::Reply {
                client: msg.client,
                frame,
            });
        }
        match sim.step() {
            Ok(Some(record)) => {
                let _ = handle.outbound.send(Outbound::Telemetry(record));
                if let Some(factor) = realtime_factor {
                    let target = Duration::from_secs_f64((sim.time() - t0) / factor);
                    if let Some(wait) = target.checked_sub(started.elapsed()) {
                        thread::sleep(wait);
                    }
                }
            }
            Ok(None) => {}
            Err(e) => {
                log::error!("{e}");
                return Outcome::Fault(e.to_string());
            }
        }
        if let Some(outcome) = sim.outcome() {
            return outcome.clone();
        }
    }
}

fn hub(rx: Receiver<HubMsg>) {
    let mut clients: HashMap<u64, Sender<String>> = HashMap::new();
    let mut commander: Option<u64> = None;
    let mut telemetry_seq = 0u64;
    for msg in rx {
        match msg {
            HubMsg::Register {
                id,
                role,
                tx,
                accepted,
            } => {
                let ok = role == Role::Observer || commander.is_none();
                if ok {
                    if role == Role::Commander {
                        commander = Some(id);
                    }
                    clients.insert(id, tx);
                }
                let _ = accepted.send(ok);
            }
            HubMsg::Unregister(id) => {
                clients.remove(&id);
                if commander == Some(id) {
                    commander = None;
                }
            }
            HubMsg::Out(Outbound::Telemetry(record)) => {
                telemetry_seq += 1;
                let text = telemetry_frame(telemetry_seq, &record).to_text();
                clients.retain(|_, tx| tx.send(text.clone()).is_ok());
            }
            HubMsg::Out(Outbound::Reply { client, frame }) => {
                if let Some(tx) = clients.get(&client) {
                    let _ = tx.send(frame.to_text());
                }
            }
        }
    }
}

fn role_from_query(uri: &str) -> Result<Role, String> {
    let query = uri.split_once('?').map(|(_, q)| q).unwrap_or("");
    for pair in query.split('&') {
        if let Some(("role", value)) = pair.split_once('=') {
            return match value {
                "commander" => Ok(Role::Commander),
                "observer" => Ok(Role::Observer),
                other => Err(format!("unknown role '{other}'")),
            };
        }
    }
    Ok(Role::Observer)
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn serve_client(id: u64, stream: TcpStream, hub_tx: Sender<HubMsg>, in_tx: Sender<Inbound>) -> tungstenite::Result<()> {
    let mut uri = String::new();
    let mut ws = tungstenite::accept_hdr(stream, |req: &Request, resp: Response| {
        uri = req.uri().to_string();
        Ok(resp)
    })
    .map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;

    let role = match role_from_query(&uri) {
        Ok(r) => r,
        Err(reason) => return reject(&mut ws, &reason),
    };
    let (tx, rx) = unbounded::<String>();
    let (ok_tx, ok_rx) = bounded(1);
    if hub_tx
        .send(HubMsg::Register {
            id,
            role,
            tx,
            accepted: ok_tx,
        })
        .is_err()
        || !ok_rx.recv().unwrap_or(false)
    {
        return reject(&mut ws, "a commander is already connected");
    }
    ws.send(Message::text(hello_frame(role).to_text()))?;
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(10)))?;

    let result = client_loop(id, role, &mut ws, &rx, &in_tx);
    let _ = hub_tx.send(HubMsg::Unregister(id));
    result
}

fn reject(ws: &mut WebSocket<TcpStream>, reason: &str) -> tungstenite::Result<()> {
    ws.send(Message::text(err_frame(0, reason).to_text()))?;
    ws.close(None)?;
    // drain until the close handshake completes
    while ws.read().is_ok() {}
    Ok(())
}

fn client_loop(
    id: u64,
    role: Role,
    ws: &mut WebSocket<TcpStream>,
    outgoing: &Receiver<String>,
    in_tx: &Sender<Inbound>,
) -> tungstenite::Result<()> {
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = match (role, parse_command(text.as_str())) {
                    (Role::Observer, parsed) => Some(err_frame(
                        parsed.map(|(seq, _)| seq).unwrap_or_else(|e| e.seq),
                        "observer sessions cannot send commands",
                    )),
                    (Role::Commander, Ok((seq, command))) => {
                        let _ = in_tx.send(Inbound {
                            client: id,
                            seq,
                            command,
                        });
                        None
                    }
                    (Role::Commander, Err(e)) => Some(err_frame(e.seq, &e.reason)),
                };
                if let Some(frame) = reply {
                    ws.send(Message::text(frame.to_text()))?;
                }
            }
            Ok(Message::Binary(_)) => ws.send(Message::text(err_frame(0, "binary frames are not supported").to_text()))?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        for text in outgoing.try_iter() {
            ws.send(Message::text(text))?;
        }
    }
}
