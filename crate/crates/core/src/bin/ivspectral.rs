use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ivspectral::cli::{self, Command, OutputFormat, Overrides};
use ivspectral::Error;

#[derive(Parser)]
#[command(name = "ivspectral", version, about = "2SLS and spectrally regularized 2SLS with many instruments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run a Monte Carlo scenario and report bias and MSE per estimator.
    Simulate(Common),
    /// Estimate on a CSV dataset with header y,x1..xG,z1..zK.
    Estimate(Common),
    /// Report effective-instrument counts, Q_K gaps and the instrument spectrum.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run document.
    #[arg(long)]
    config: PathBuf,
    /// Input CSV; overrides `input_path`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report destination; overrides `output_path`. Standard output if neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `scenario.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_format`.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for replications (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn run(command: Command, args: Common) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::Config {
        field: "config".into(),
        message: format!("cannot read {}: {e}", args.config.display()),
    })?;
    let overrides = Overrides {
        command: Some(command),
        input_path: args.data,
        output_path: args.out,
        output_format: args.format.map(|f| match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }),
        seed: args.seed,
    };
    let config = cli::parse_config_with(&text, &overrides)?;
    let report = cli::execute_with_workers(&config, args.workers)?;
    match &config.output_path {
        Some(path) => cli::write_report(path, &report),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let (command, args) = match Cli::parse().command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Estimate(a) => (Command::Estimate, a),
        Sub::Diagnose(a) => (Command::Diagnose, a),
    };
    match run(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
