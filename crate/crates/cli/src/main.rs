use clap::{Args, Parser, Subcommand};
use rootopt_cli::commands::{bench_orth, calibrate, compare, grad_stats, report, train};
use rootopt_cli::config::{BenchOrthConfig, CalibrateConfig, CompareConfig, GradStatsConfig, ReportConfig, TrainConfig};
use rootopt_cli::{execute, Invocation};
use std::path::PathBuf;
use std::process::ExitCode;

/// Orthogonalized-momentum optimizer toolkit: coefficient calibration,
/// orthogonalization benchmarks and synthetic training experiments.
#[derive(Parser)]
#[command(name = "rootopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; omitted keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory [default: runs/<subcommand>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// reuse an output directory that already has contents
    #[arg(long)]
    force: bool,
    /// print the effective config as TOML and exit
    #[arg(long)]
    print_config: bool,
}

impl From<Common> for Invocation {
    fn from(c: Common) -> Self {
        Invocation {
            config: c.config,
            out: c.out,
            seed: c.seed,
            force: c.force,
            print_config: c.print_config,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-shape Newton-Schulz coefficients
    Calibrate(Common),
    /// Compare orthogonalization strategies against the SVD polar factor
    BenchOrth(Common),
    /// Distribution statistics of gradient entries
    GradStats(Common),
    /// Train one optimizer on a synthetic task
    Train(Common),
    /// Run several optimizers over several seeds
    Compare(Common),
    /// Summarize a finished run directory
    Report {
        #[command(flatten)]
        common: Common,
        /// run directory to summarize
        #[arg(long)]
        input: Option<PathBuf>,
        /// also draw the loss curve
        #[arg(long)]
        plot: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(c) => execute(
            "calibrate",
            &c.into(),
            |cfg: &mut CalibrateConfig, seed| cfg.seed = seed.unwrap_or(cfg.seed),
            calibrate::run,
        ),
        Command::BenchOrth(c) => execute(
            "bench-orth",
            &c.into(),
            |cfg: &mut BenchOrthConfig, seed| cfg.seed = seed.unwrap_or(cfg.seed),
            bench_orth::run,
        ),
        Command::GradStats(c) => execute(
            "grad-stats",
            &c.into(),
            |cfg: &mut GradStatsConfig, seed| cfg.task.seed = seed.unwrap_or(cfg.task.seed),
            grad_stats::run,
        ),
        Command::Train(c) => execute(
            "train",
            &c.into(),
            |cfg: &mut TrainConfig, seed| cfg.task.seed = seed.unwrap_or(cfg.task.seed),
            train::run,
        ),
        Command::Compare(c) => execute(
            "compare",
            &c.into(),
            |cfg: &mut CompareConfig, seed| cfg.seed = seed.unwrap_or(cfg.seed),
            compare::run,
        ),
        Command::Report { common, input, plot } => execute(
            "report",
            &common.into(),
            |cfg: &mut ReportConfig, _| {
                if input.is_some() {
                    cfg.input = input;
                }
                cfg.plot |= plot;
            },
            report::run,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rootopt: {e}");
            if matches!(e, rootopt_cli::error::CliError::Config(_)) {
                eprintln!("run with --print-config to see every key and its default");
            }
            e.exit_code()
        }
    }
}
