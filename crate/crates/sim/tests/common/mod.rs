#![allow(dead_code)]

use std::path::PathBuf;

use hopper_sim::config::SimConfig;
use hopper_sim::reference::ReferenceTrack;
use hopper_sim::script::Script;
use hopper_sim::simulation::Simulation;

pub fn missions() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../missions")
}

pub fn nominal_config() -> SimConfig {
    SimConfig::load(&missions().join("nominal.toml")).unwrap()
}

pub fn nominal_script() -> Script {
    Script::load(&missions().join("nominal.events")).unwrap()
}

pub fn arena_track() -> ReferenceTrack {
    ReferenceTrack::load(&missions().join("arena_loop.csv")).unwrap()
}

/// Simulation with the given config and script text; the track comes
/// from `cfg.trajectory.path` when set.
pub fn simulation(cfg: SimConfig, script: &str) -> Simulation {
    let track = cfg.trajectory.path.as_ref().map(|p| ReferenceTrack::load(p).unwrap());
    Simulation::new(cfg, track, Script::parse(script).unwrap()).unwrap()
}

/// Script lines sending a heartbeat every `period` from `from` to `to`.
pub fn heartbeats(from: f64, to: f64, period: f64) -> String {
    let mut out = String::new();
    let mut t = from;
    while t <= to + 1e-9 {
        out.push_str(&format!("{t:.3} heartbeat\n"));
        t += period;
    }
    out
}
