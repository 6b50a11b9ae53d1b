use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fgq_cli::{run, Command, Flags, RunConfig, UsageError};

/// Fine-grained ternary quantization toolkit.
#[derive(Parser)]
#[command(name = "fgq", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Sub {
    /// Fit weight-magnitude distributions and compare analytic thresholds.
    Analyze,
    /// Quantize weights into grouped ternary layers and write a model file.
    Ternarize,
    /// Emulate a model on activations and compare against full precision.
    Simulate,
    /// Count operations and project speedup.
    Perf,
    /// Write a seeded synthetic model and input.
    Synth,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Analyze => Command::Analyze,
        Sub::Ternarize => Command::Ternarize,
        Sub::Simulate => Command::Simulate,
        Sub::Perf => Command::Perf,
        Sub::Synth => Command::Synth,
    };
    let cfg = match RunConfig::resolve(command, &cli.flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(Some(text)) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(text.as_bytes()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
