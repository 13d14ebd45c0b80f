//! Experiment runner: `run` executes a configured sweep of naming-game
//! conditions over seeded trials, `verify` runs the bundled self-checks,
//! `serve` runs one agent of a two-process game over a socket.

mod config;
mod datasets;
mod runner;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use emcom_core::agent::AgentId;
use emcom_core::game::Condition;

use crate::config::ExperimentConfig;
use crate::serve::ServeOptions;

#[derive(Parser)]
#[command(name = "emcom", version, about = "Two-agent naming-game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment sweep described by a TOML config.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Run the self-verification suite and print a pass/fail table.
    Verify {
        /// Smaller sweep counts for a fast smoke pass.
        #[arg(long)]
        quick: bool,
    },
    /// Run one agent of a two-process game.
    Serve {
        /// Which agent this process embodies.
        #[arg(long, value_parser = parse_role)]
        role: AgentId,
        /// Socket address (agent b binds, agent a connects).
        #[arg(long)]
        addr: String,
        /// Condition to run (mh or mh_one_way).
        #[arg(long, default_value = "mh")]
        condition: String,
        /// Enable mutual inference.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        mi: bool,
        /// Trial index selecting the seed.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Seconds to keep retrying the initial connection (agent a).
        #[arg(long, default_value_t = 30)]
        connect_timeout: u64,
        /// Path to the experiment config.
        config: PathBuf,
    },
}

fn parse_role(s: &str) -> Result<AgentId, String> {
    match s {
        "a" | "A" => Ok(AgentId::A),
        "b" | "B" => Ok(AgentId::B),
        other => Err(format!("role must be 'a' or 'b', got {other:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = runner::cmd_run(&cfg) {
                eprintln!("run failed: {e:#}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Command::Verify { quick } => {
            let outcomes = emcom_core::verify::run_all(quick);
            print!("{}", emcom_core::verify::render_table(&outcomes));
            if outcomes.iter().all(|o| o.passed) {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                println!("some checks FAILED");
                ExitCode::from(1)
            }
        }
        Command::Serve { role, addr, condition, mi, trial, connect_timeout, config } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            let condition = match Condition::parse(&condition) {
                Some(c) => c,
                None => {
                    eprintln!("config error: unknown condition {condition:?}");
                    return ExitCode::from(2);
                }
            };
            let opts = ServeOptions {
                role,
                addr,
                condition,
                mi,
                trial,
                connect_timeout: Duration::from_secs(connect_timeout),
            };
            if let Err(e) = serve::cmd_serve(&cfg, &opts) {
                eprintln!("serve failed: {e:#}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
    }
}
