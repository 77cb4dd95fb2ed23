//! `tqd`: singlet-return curves, method comparisons, trace fits and
//! per-dot variance solving for pulsed triple quantum dots.

mod commands;
mod config;
mod failure;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{FitArgs, FitModel};
use config::{MethodName, Overrides, RunConfig};
use failure::Failure;
use units::Units;

#[derive(Parser)]
#[command(name = "tqd", version, about = "Hyperfine-averaged singlet return in triple quantum dots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write P0(t) for the configured methods as CSV.
    Curve(RunArgs),
    /// Compare two or more methods on one grid; writes a JSON report.
    Compare(RunArgs),
    /// Fit a dephasing or Rabi model to a `t, p0[, weight]` CSV trace.
    Fit {
        /// Trace CSV, or `-` for stdin.
        trace: PathBuf,
        #[arg(long, value_enum)]
        model: FitModel,
        /// Starting exchange strength for Rabi fits, units of sigma_hf.
        #[arg(long)]
        j_guess: Option<f64>,
        /// Value column by header name (default: second column).
        #[arg(long)]
        column: Option<String>,
        /// Unit of the trace's time column.
        #[arg(long, default_value = "dimensionless", value_parser = parse_units)]
        units: Units,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve (sigma1^2, sigma2^2, sigma3^2) from fitted decay constants.
    SolveSigmas {
        /// JSON list of {kind, value, stderr} (or value_sq, stderr_sq), or `-`.
        measurements: PathBuf,
        /// Report only sigma3^2, allowing the two-constant shortcut.
        #[arg(long)]
        sigma3_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags below take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated: mc, exact, inf_j, high_j, low_j, zero_j.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    method: Option<Vec<MethodName>>,
    /// Time unit of the output: dimensionless, gaas, si or custom:<ns>.
    #[arg(long, value_parser = parse_units)]
    units: Option<Units>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Exchange strength, units of sigma_hf.
    #[arg(long)]
    j: Option<f64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<u64>,
}

fn parse_units(s: &str) -> Result<Units, String> {
    s.parse().map_err(|e: Failure| e.message)
}

fn parse_method(s: &str) -> Result<MethodName, String> {
    MethodName::parse(s).map_err(|e| e.message)
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Failure> {
        let cfg = RunConfig::load(self.config.as_deref())?;
        Ok(cfg.apply(Overrides {
            out: self.out,
            seed: self.seed,
            methods: self.method,
            units: self.units,
            workers: self.workers,
            j: self.j,
            samples: self.samples,
        }))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Curve(args) => commands::cmd_curve(&args.resolve()?),
        Command::Compare(args) => commands::cmd_compare(&args.resolve()?),
        Command::Fit { trace, model, j_guess, column, units, out } => {
            commands::cmd_fit(&FitArgs { trace, model, j_guess, column, units, out })
        }
        Command::SolveSigmas { measurements, sigma3_only, out } => {
            commands::cmd_solve(&measurements, sigma3_only, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let failure = Failure::usage(e.to_string().trim().to_string());
            eprintln!("{}", failure.to_json());
            return ExitCode::from(failure.exit_code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.exit_code as u8)
        }
    }
}
