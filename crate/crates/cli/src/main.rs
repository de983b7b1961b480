mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::Failure;

/// Learnable spectrogram compression: feature extraction, training and
/// speaker-verification scoring.
#[derive(Parser)]
#[command(name = "speccomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute STFT magnitude (optionally compressed) feature files from WAV audio.
    Extract(commands::extract::Args),
    /// Write an initialized compressor state.
    Init(commands::init::Args),
    /// Jointly train a compressor and embedding head on a synthetic corpus.
    Train(commands::train::Args),
    /// Score trial lists and report EER and minDCF.
    Evaluate(commands::evaluate::Args),
    /// Print per-channel compressor parameters as CSV.
    DumpParams(commands::dump::Args),
    /// Compare analytic compressor gradients against finite differences.
    Gradcheck(commands::gradcheck::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too, on stdout with success.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Extract(a) => commands::extract::run(a),
        Command::Init(a) => commands::init::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::DumpParams(a) => commands::dump::run(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Reported(code)) => ExitCode::from(code),
        Err(e) => {
            eprintln!("speccomp: {e}");
            ExitCode::from(e.code())
        }
    }
}
