//! `platoon`: run, compare and analyze platoon scenarios, or serve a live
//! teleop session over WebSocket.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 configuration error.

mod batch;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use platoon_core::scenario::{LateralKind, ScenarioError};

#[derive(Debug)]
pub enum CliError {
    /// Bad or unreadable scenario, conflicting options.
    Config(String),
    /// Output, network or other runtime failure.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LateralArg {
    /// Pure Pursuit
    Pp,
    /// Stanley
    Stanley,
}

impl From<LateralArg> for LateralKind {
    fn from(a: LateralArg) -> Self {
        match a {
            LateralArg::Pp => LateralKind::PurePursuit,
            LateralArg::Stanley => LateralKind::Stanley,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "platoon", version, about = "Predecessor-following platoon simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and metrics.csv.
    Run {
        /// Built-in scenario name (lane_change_pp, lane_change_stanley, teleop) or a TOML file.
        #[arg(long)]
        scenario: String,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's lateral controller.
        #[arg(long, value_enum)]
        lateral: Option<LateralArg>,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario under Pure Pursuit and under Stanley with identical
    /// seed and initial conditions, and write both runs plus comparison.csv.
    Compare {
        /// Built-in scenario name or a TOML file.
        #[arg(long)]
        scenario: String,
        /// Output directory; runs go to pure_pursuit/ and stanley/ inside it.
        #[arg(long)]
        out: PathBuf,
        /// Override the seed used by both runs.
        #[arg(long)]
        seed: Option<u64>,
        /// Seed requested for the Stanley run. Refused unless it equals the
        /// seed of the Pure Pursuit run.
        #[arg(long)]
        stanley_seed: Option<u64>,
    },
    /// Compute metrics.csv from an existing trace.csv.
    Analyze {
        /// Trace written by `run` or `compare`.
        #[arg(long)]
        trace: PathBuf,
        /// Scenario the trace came from (maneuver and cruise speed are used).
        #[arg(long)]
        scenario: String,
        /// Output directory for metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a realtime teleop session over WebSocket at /ws.
    Serve {
        /// Built-in scenario name or a TOML file; its maneuver should be teleop.
        #[arg(long, default_value = "teleop")]
        scenario: String,
        /// TCP port; 0 picks a free port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static cockpit assets served at /.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            lateral,
            seed,
        } => batch::run(&scenario, &out, lateral.map(Into::into), seed),
        Command::Compare {
            scenario,
            out,
            seed,
            stanley_seed,
        } => batch::compare(&scenario, &out, seed, stanley_seed),
        Command::Analyze { trace, scenario, out } => batch::analyze(&trace, &scenario, &out),
        Command::Serve {
            scenario,
            port,
            host,
            ui_dir,
            seed,
        } => serve::serve(&scenario, &host, port, ui_dir, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
