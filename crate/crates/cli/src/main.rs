//! `pose2traj` command-line tool.
//!
//! Exit codes: 0 success, 2 input or schema error, 3 numeric failure,
//! 4 missing artifact.

mod error;
mod eval;
mod io;
mod records;
mod settings;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "pose2traj", version, about = "Player trajectory forecasting from pose sequences")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings file and overrides. `train` reads model and training keys,
/// `synth` generator keys and `gapfill` `context` and `degree`; each ignores
/// keys that belong to the others.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key=value settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set d_model=32`. Repeatable; applied
    /// after the config file and before dedicated flags.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a record file and convert between CSV and JSONL.
    Ingest(records::IngestArgs),
    /// Fill missing ball positions by local polynomial regression.
    Gapfill(records::GapfillArgs),
    /// Generate a synthetic rally.
    Synth(records::SynthArgs),
    /// Train one model and write its checkpoint and metrics log.
    Train(train::TrainArgs),
    /// Forecast a trajectory from a checkpoint.
    Predict(train::PredictArgs),
    /// Score checkpoints over a grid of encoder lengths and horizons.
    Evaluate(eval::EvaluateArgs),
    /// Re-render an evaluation table.
    Report(eval::ReportArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => records::ingest(a),
        Command::Gapfill(a) => records::gapfill(a, &cli.config),
        Command::Synth(a) => records::synth(a, &cli.config),
        Command::Train(a) => train::train(a, &cli.config),
        Command::Predict(a) => train::predict(a),
        Command::Evaluate(a) => eval::evaluate(a),
        Command::Report(a) => eval::report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
