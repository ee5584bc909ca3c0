//! The `dascl` command line: keyword simplification, training, evaluation,
//! gradient checking, and embedding export over JSONL corpora.
//!
//! Exit codes: 0 success, 1 usage or validation failure, 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dascl::losses::LossMode;

use commands::CliError;

#[derive(Parser)]
#[command(name = "dascl", version, about = "Dictionary-assisted supervised contrastive learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Keyword-simplify a JSONL corpus with one or more dictionaries.
    Simplify {
        /// Dictionary as PATH:TOKEN (e.g. `positive.txt:<positive>`);
        /// repeatable, listed in priority order.
        #[arg(long = "dict", value_name = "PATH:TOKEN")]
        dicts: Vec<String>,
        /// Input corpus (JSONL with id/text/label per line).
        #[arg(long = "in", value_name = "JSONL")]
        input: PathBuf,
        /// Output corpus; line i corresponds to input line i.
        #[arg(long = "out", value_name = "JSONL")]
        output: PathBuf,
    },
    /// Run a training experiment; writes a checkpoint and a history file.
    Train {
        /// Experiment configuration (JSON).
        #[arg(long, value_name = "JSON")]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a labeled corpus; prints a metrics report.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long = "in", value_name = "JSONL")]
        input: PathBuf,
        /// Also write the report here.
        #[arg(long = "out", value_name = "JSON")]
        output: Option<PathBuf>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Restrict to one loss mode (default: all modes).
        #[arg(long, value_parser = parse_mode)]
        mode: Option<LossMode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Randomized trials per mode.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Export hidden activations and normalized projections as CSV.
    ExportEmbeddings {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long = "in", value_name = "JSONL")]
        input: PathBuf,
        #[arg(long = "out", value_name = "CSV")]
        output: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<LossMode, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simplify {
            dicts,
            input,
            output,
        } => commands::simplify(&dicts, &input, &output),
        Command::Train { config } => commands::train(&config),
        Command::Eval {
            checkpoint,
            input,
            output,
        } => commands::eval(&checkpoint, &input, output.as_deref()),
        Command::Gradcheck { mode, seed, trials } => commands::gradcheck(mode, seed, trials),
        Command::ExportEmbeddings {
            checkpoint,
            input,
            output,
        } => commands::export_embeddings(&checkpoint, &input, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
