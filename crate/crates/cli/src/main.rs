use std::path::PathBuf;
use std::process::ExitCode;

use cavfield::{run, CliError, Command, RunArgs, SolverConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Forward,
    Synth,
    Invert,
    Sweep,
    Check,
}

/// Phase-field cavity detection for -div(A grad u) + u^3 = f with Neumann data.
#[derive(Debug, Parser)]
#[command(name = "cavfield", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// Measurement CSV; its sidecar is the same path with a .json extension.
    #[arg(long)]
    meas: Option<PathBuf>,
    /// Output directory (overrides `out_dir` of the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep parameter: delta, epsilon or alpha.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Allow reconstructing on the mesh the data were synthesized on.
    #[arg(long)]
    allow_inverse_crime: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let command = match cli.command {
        Cmd::Forward => Command::Forward,
        Cmd::Synth => Command::Synth,
        Cmd::Invert => Command::Invert,
        Cmd::Sweep => Command::Sweep,
        Cmd::Check => Command::Check,
    };
    let args = RunArgs {
        meas: cli.meas,
        out: cli.out,
        param: cli.param,
        values: cli.values,
        allow_inverse_crime: cli.allow_inverse_crime,
    };
    // An unreadable config is bad input, not an output failure.
    let result = SolverConfig::load(&cli.config)
        .map_err(|e| CliError::Validation(e.to_string()))
        .and_then(|cfg| run(command, &cfg, &args));
    match result {
        Ok(outcome) => {
            println!("{}: wrote {} files to {}", command.name(), outcome.manifest.outputs.len(), outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cavfield {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
