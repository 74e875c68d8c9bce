use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use edgesim_core::manager::ConnMode;
use edgesim_core::scenario::{parse_scenario, Scenario, ScenarioInvalid};
use edgesim_core::sim::run_scenario;

mod manager_server;
mod output;

#[derive(Parser)]
#[command(name = "edgesim", version, about = "Edge network control-plane simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Serve the cluster manager protocol on a TCP port.
    Manager {
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, value_enum, default_value_t = Mode::Concurrent)]
        mode: Mode,
        /// Give every controller the EQUAL role.
        #[arg(long)]
        equal: bool,
        /// Serial mode: seconds after which a silent controller is forgotten.
        #[arg(long, default_value_t = 2.5)]
        stale_after: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Serial,
    Concurrent,
}

const EXIT_SCENARIO: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_SCENARIO)
    })?;
    parse_scenario(&text).map_err(|e| scenario_error(path, &e))
}

fn scenario_error(path: &Path, e: &ScenarioInvalid) -> ExitCode {
    eprintln!("error: {}: {e}", path.display());
    ExitCode::from(EXIT_SCENARIO)
}

fn run(path: &Path, out_dir: &Path, format: Format) -> ExitCode {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let report = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => return scenario_error(path, &e),
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("runtime error: cannot create {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let written = match format {
        Format::Json => output::write_json(&report, out_dir),
        Format::Csv => output::write_csvs(&report, out_dir),
        Format::Both => output::write_json(&report, out_dir).and_then(|()| output::write_csvs(&report, out_dir)),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out_dir, format } => run(&scenario, &out_dir, format),
        Command::Validate { scenario } => match load(&scenario).and_then(|s| {
            s.validate().map(|_| ()).map_err(|e| scenario_error(&scenario, &e))
        }) {
            Ok(()) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Manager { port, mode, equal, stale_after } => {
            let mode = match mode {
                Mode::Serial => ConnMode::Serial,
                Mode::Concurrent => ConnMode::Concurrent,
            };
            let cfg = manager_server::ServerConfig { mode, equal, stale_after };
            match manager_server::serve(port, cfg) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("runtime error: manager: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
