use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

#[derive(Parser)]
#[command(name = "gcs", version, about = "Learn and evaluate geometric constellations for fiber links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `out_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for grid-point parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Validate the configuration and exit without computing.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one constellation per (launch power, span count) grid point.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// MI of constellation files and square QAM over the sweep grid.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Add square M-QAM baselines.
        #[arg(long = "qam", value_name = "M")]
        qam: Vec<usize>,
        /// Constellation text files (`M N` header, then M rows of N values).
        constellations: Vec<PathBuf>,
    },
    /// Split-step Fourier MI next to the model MI over the sweep grid.
    SsfValidate {
        #[command(flatten)]
        common: Common,
        /// Add square M-QAM constellations.
        #[arg(long = "qam", value_name = "M")]
        qam: Vec<usize>,
        /// Calibrate the χ coefficients from one run of the first
        /// constellation at this launch power before evaluating the model.
        #[arg(long, value_name = "DBM", allow_hyphen_values = true)]
        calibrate_dbm: Option<f64>,
        /// Also write the received center-channel symbols per grid point.
        #[arg(long)]
        dump_symbols: bool,
        /// Two-dimensional constellation text files.
        constellations: Vec<PathBuf>,
    },
    /// Plot-data tables from result CSVs.
    Figures {
        #[command(flatten)]
        common: Common,
        /// `results.csv` files written by train, evaluate or ssf-validate.
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common } => commands::train::run(&common),
        Command::Evaluate { common, qam, constellations } => commands::evaluate::run(&common, &qam, &constellations),
        Command::SsfValidate { common, qam, calibrate_dbm, dump_symbols, constellations } => {
            commands::ssf_validate::run(&common, &qam, &constellations, calibrate_dbm, dump_symbols)
        }
        Command::Figures { common, results } => commands::figures::run(&common, &results),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
