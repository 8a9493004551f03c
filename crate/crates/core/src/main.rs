use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stillwater::cli::{self, Mode, Overrides, RunConfig};

/// Stationary forced viscous shallow water flow over bathymetry on the torus.
#[derive(Parser)]
#[command(name = "stillwater", version)]
struct Args {
    /// solve, continue or verify
    #[arg(value_enum)]
    mode: Mode,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides STILLWATER_OUT and the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent solves (overrides STILLWATER_JOBS)
    #[arg(long)]
    jobs: Option<usize>,
    /// Derived fields to add to state files, e.g. div_u,curl_u
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(cli::EXIT_CONFIG as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = Overrides {
        mode: Some(args.mode),
        out: args.out,
        jobs: args.jobs,
        emit: args.emit,
    }
    .with_env()
    .and_then(|ov| cli::run(&RunConfig::load(&args.config)?, &ov));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.status as u8)
        }
        Err(e) => {
            eprintln!("stillwater: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
