use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rangeshift::cli::{dispatch, load_config, parse_config, CliError, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    /// One scenario: trajectory.csv and optional snapshots.
    Run,
    /// Two-axis parameter sweep: sweep.csv.
    Sweep,
    /// Critical opening height search: hstar.csv.
    Hstar,
    /// Front speed against the analytic spreading speed: speedcheck.csv.
    Speedcheck,
    /// Conservation, positivity and refinement checks.
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "rangeshift", version, about = "Range-shift reaction-diffusion simulator")]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// Flat key=value configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the `workers` key.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Sub::Run => Command::Run,
        Sub::Sweep => Command::Sweep,
        Sub::Hstar => Command::Hstar,
        Sub::Speedcheck => Command::Speedcheck,
        Sub::Validate => Command::Validate,
    };
    let result = (|| -> Result<_, CliError> {
        let mut config = match &args.config {
            Some(path) => load_config(path)?,
            None => parse_config("")?,
        };
        if let Some(w) = args.workers {
            config.workers = w.max(1);
        }
        dispatch(command, &config, &args.out)
    })();
    match result {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            match summary.into_result() {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
