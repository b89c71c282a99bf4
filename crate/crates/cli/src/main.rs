mod args;
mod config;
mod error;
mod fit;
mod io;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::{pick, FileConfig};
use error::CliError;

const DEFAULT_OUT_DIR: &str = "mvlink-out";

/// Settings shared by every subcommand.
pub struct Common {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let common = Common {
        seed: pick(cli.common.seed, &file.seed, 0),
        jobs: pick(cli.common.jobs, &file.jobs, 1),
        out_dir: pick(cli.common.out_dir, &file.out_dir, PathBuf::from(DEFAULT_OUT_DIR)),
    };
    if common.jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    match &cli.command {
        Command::Fit(args) => fit::run_fit(&common, &file, args),
        Command::Cv(args) => fit::run_cv_command(&common, &file, args),
        Command::Predict(args) => fit::run_predict(&common, args),
        Command::Simulate(args) => simulate::run_simulate(&common, &file, args),
        Command::Benchmark(args) => simulate::run_benchmark_command(&common, &file, args),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mvlink: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
