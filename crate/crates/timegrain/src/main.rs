use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use timegrain::cli::{run, Command};

/// Config-driven time-series modeling runs. Flags only override the
/// config path, output directory and master seed; everything else lives
/// in the TOML config.
#[derive(Parser)]
#[command(name = "timegrain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectral density analysis: per-dataset KDE grids and the pairwise
    /// distance matrix.
    Analyze(Common),
    /// Blank-infilling pretraining; writes checkpoint and training report.
    Pretrain(Common),
    /// Long-term forecasting from a pretrained checkpoint.
    Forecast(Common),
    /// Point-wise imputation from a pretrained checkpoint.
    Impute(Common),
    /// Reconstruction-based anomaly detection from a pretrained checkpoint.
    Detect(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Analyze(c) => (Command::Analyze, c),
        Cmd::Pretrain(c) => (Command::Pretrain, c),
        Cmd::Forecast(c) => (Command::Forecast, c),
        Cmd::Impute(c) => (Command::Impute, c),
        Cmd::Detect(c) => (Command::Detect, c),
    };
    match run(cmd, &common.config, common.out, common.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("timegrain {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
