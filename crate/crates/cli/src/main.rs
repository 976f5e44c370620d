use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tmsim::scenario::{command_count, load_spec, run_scenario, CommandCountQuery, CommandMode};
use tmsim::Error;

/// Traffic-manager simulator.
#[derive(Parser)]
#[command(name = "tmsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export its metrics.
    Run {
        /// Scenario spec (TOML), or a JSON spec or run manifest.
        spec: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `out/<scenario name>`.
        #[arg(long, env = "TMSIM_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Check a scenario spec and list every violation.
    Validate { spec: PathBuf },
    /// Control-plane commands needed to apply a prioritisation.
    Cmdcount {
        #[arg(long = "switches")]
        n: u64,
        #[arg(long = "procs")]
        m: u64,
        #[arg(long = "prio")]
        p: u64,
        /// STRICT_FULL, STRICT_PROACTIVE_ADJUST or RL_SP_DRR
        #[arg(long, value_parser = parse_mode)]
        mode: CommandMode,
    },
}

fn parse_mode(s: &str) -> std::result::Result<CommandMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::Validation(v)) = e.downcast_ref::<Error>() {
                for msg in v {
                    eprintln!("  - {msg}");
                }
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { spec, seed, out } => run(&spec, seed, out),
        Command::Validate { spec } => {
            let s = load_spec(&spec)?;
            s.validate()?;
            println!("{}: ok", spec.display());
            Ok(())
        }
        Command::Cmdcount { n, m, p, mode } => {
            let q = CommandCountQuery {
                n_switches: n,
                processes_per_switch: m,
                prioritized: p,
                mode,
            };
            println!("{}", command_count(&q)?);
            Ok(())
        }
    }
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut spec = load_spec(path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dir = out.unwrap_or_else(|| Path::new("out").join(&spec.name));
    let result = run_scenario(&spec).with_context(|| format!("scenario {} failed", spec.name))?;
    let files = result.export(&dir)?;
    let s = &result.summary;
    println!(
        "{}: {} events, simulated {} s, injected {}, delivered {}, dropped {}",
        spec.name, s.events, s.end_s, s.injected, s.delivered, s.dropped
    );
    for f in files {
        println!("  {}  {}", f.sha256, dir.join(&f.name).display());
    }
    Ok(())
}
