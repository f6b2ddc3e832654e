use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

mod commands;
mod config;

use config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "survgame",
    version,
    about = "Discrete-time survival models trained as censoring-weighted games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// JSON experiment config; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `name`.
    #[arg(long)]
    name: Option<String>,
    /// Overrides the seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write simulated train/validation/test CSVs with latent-time sidecars.
    Simulate(Common),
    /// Train both players and save the selected checkpoints.
    Train(Common),
    /// Evaluate saved failure checkpoints on the test split.
    Evaluate(Common),
    /// Emit the population gradient field of one induction step.
    GradientField(Common),
    /// Multi-start search for stationary points of the population game.
    StationaryCheck(Common),
    /// Grid scan of the summed joint population objective.
    JointScan(Common),
    /// Run every point of the configured sweep.
    Sweep(Common),
}

fn load(common: &Common) -> survgame_core::Result<Config> {
    let mut cfg = Config::load(common.config.as_deref())?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(name) = &common.name {
        cfg.name = name.clone();
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> survgame_core::Result<serde_json::Value> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(&load(&c)?),
        Command::Train(c) => commands::train_cmd(&load(&c)?),
        Command::Evaluate(c) => commands::evaluate_cmd(&load(&c)?),
        Command::GradientField(c) => commands::gradient_field_cmd(&load(&c)?),
        Command::StationaryCheck(c) => commands::stationary_check_cmd(&load(&c)?),
        Command::JointScan(c) => commands::joint_scan_cmd(&load(&c)?),
        Command::Sweep(c) => commands::sweep_cmd(&load(&c)?),
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": message, "kind": kind }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(cli) {
        Ok(summary) => {
            // a closed pipe on stdout is not a failure of the command
            let _ = writeln!(
                std::io::stdout(),
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
