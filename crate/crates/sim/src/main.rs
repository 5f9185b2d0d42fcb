use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hopper_core::trajectory::{plan_spline, Waypoint};
use hopper_sim::config::SimConfig;
use hopper_sim::protocol::transition_table;
use hopper_sim::reference::{write_table, ReferenceTrack};
use hopper_sim::script::Script;
use hopper_sim::server;
use hopper_sim::simulation::{Outcome, Simulation};
use hopper_sim::telemetry::write_csv;

#[derive(Parser)]
#[command(name = "hopper", version, about = "TVC hopper closed-loop simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mission.
    Run {
        /// TOML configuration; omitted sections take the shipped defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scripted event file (`t verb [args]` per line).
        #[arg(long)]
        script: Option<PathBuf>,
        /// Serve the wire protocol on this port.
        #[arg(long)]
        serve: Option<u16>,
        /// Run as fast as possible instead of pacing to wall time.
        #[arg(long)]
        headless: bool,
        /// Overrides the configured noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for telemetry.csv, transitions.csv, metrics.json and config.toml.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a spline through waypoints and write the sampled reference table.
    Plan {
        #[arg(long)]
        waypoints: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the mission state machine as JSON.
    FsmTable {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run {
            config,
            script,
            serve,
            headless,
            seed,
            out,
        } => run(config.as_deref(), script.as_deref(), serve, headless, seed, out.as_deref()),
        Command::Plan { waypoints, rate, out } => {
            plan(&waypoints, rate, &out)?;
            Ok(0)
        }
        Command::FsmTable { out } => {
            let text = serde_json::to_string_pretty(&transition_table())? + "\n";
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

fn run(
    config: Option<&Path>,
    script: Option<&Path>,
    serve: Option<u16>,
    headless: bool,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<u8> {
    let mut cfg = match config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let track = match &cfg.trajectory.path {
        Some(path) => Some(ReferenceTrack::load(path).with_context(|| format!("loading {}", path.display()))?),
        None => None,
    };
    let script = match script {
        Some(path) => Script::load(path)?,
        None => Script::default(),
    };
    if serve.is_none() && script.entries().is_empty() {
        bail!("nothing would command the vehicle: pass --script or --serve");
    }

    let mut sim = Simulation::new(cfg.clone(), track, script)?;
    let outcome = match serve {
        Some(port) => {
            let handle = server::start(&format!("{}:{port}", cfg.server.host))?;
            eprintln!("serving on ws://{}", handle.local_addr);
            let pacing = (!headless).then_some(cfg.server.realtime_factor);
            server::run_live(&mut sim, &handle, pacing)
        }
        None => sim.run(),
    };

    let metrics = sim.metrics();
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_csv(fs::File::create(dir.join("telemetry.csv"))?, sim.telemetry())?;
        fs::write(dir.join("transitions.csv"), sim.transition_log())?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        match &metrics {
            Ok(m) => fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(m)? + "\n")?,
            Err(e) => log::warn!("no metrics written: {e}"),
        }
    }

    let rmse = metrics.map(|m| format!("{:.4} m", m.rmse)).unwrap_or_else(|_| "n/a".into());
    println!(
        "outcome {} at t = {:.3} s, tracking RMSE {rmse}",
        describe(&outcome),
        sim.time()
    );
    Ok(outcome.exit_code() as u8)
}

fn describe(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Fault(msg) => format!("Fault ({msg})"),
        other => format!("{other:?}"),
    }
}

fn plan(waypoints: &Path, rate: f64, out: &Path) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(waypoints)
        .with_context(|| format!("reading {}", waypoints.display()))?;
    let mut points = Vec::new();
    for row in reader.deserialize() {
        let (t, x, y, z): (f64, f64, f64, f64) = row?;
        points.push(Waypoint::new(t, x, y, z));
    }
    let rows = plan_spline(&points)?.discretize(rate)?;
    write_table(fs::File::create(out)?, &rows)?;
    Ok(())
}
