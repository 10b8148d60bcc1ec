//! `nelec`: batch entry points for the contextual emotion pipeline.

mod commands;
mod config;
mod error;
mod manifest;

use clap::{ArgAction, Parser, Subcommand};

use crate::commands::{AblateArgs, EvaluateArgs, PredictArgs, StatsArgs, TrainArgs, TuneArgs};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nelec", version, about = "Contextual emotion detection over three-turn conversations")]
struct Cli {
    /// Maximum worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corpus statistics: size, emoji share, OOV rate, length, class balance.
    Stats(StatsArgs),
    /// Build the feature space, train a classifier and persist both.
    Train(TrainArgs),
    /// Label conversations with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
    /// Tune per-emotion decision thresholds on held-out data.
    TuneThresholds(TuneArgs),
    /// Retrain with each feature group or turn removed.
    Ablate(AblateArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::TuneThresholds(a) => commands::tune(a),
        Command::Ablate(a) => commands::ablate_cmd(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let err = CliError::usage(first.trim_start_matches("error: "));
            eprintln!("{}", err.to_json_line());
            std::process::exit(err.kind.exit_code());
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(err) = run(cli) {
        eprintln!("{}", err.to_json_line());
        std::process::exit(err.kind.exit_code());
    }
}
