use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use eternal_cli::{exit, ConfigError, MissingGolden};

#[derive(Parser)]
#[command(name = "eternal", version, about = "Eternal-solution experiments on parabolic cylinders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write result.json, timing.json and CSV
    /// series. Exit codes: 0 pass, 1 check failed, 2 config error, 3
    /// internal error.
    Run {
        config: PathBuf,
        /// Output directory. Overrides the config's out_dir.
        #[arg(long, env = "ETERNAL_OUT_DIR")]
        out: Option<PathBuf>,
        /// Experiments of a suite run concurrently on this many threads.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compare a fresh run directory against a golden one. Exits 1 on drift.
    Regress { golden: PathBuf, fresh: PathBuf },
    /// Print the JSON schema of experiment configs.
    Schema,
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let prepared = eternal_cli::load(&config)?;
            let dir = eternal_cli::resolve_out_dir(&prepared, out);
            let result = eternal_cli::run(&prepared, &dir, workers)?;
            print!("{}", eternal_cli::summary(&result));
            Ok(if result.has_internal_error() {
                exit::INTERNAL
            } else if result.passed {
                exit::PASS
            } else {
                exit::CHECK_FAILED
            })
        }
        Command::Regress { golden, fresh } => {
            let report = eternal_cli::regress(&golden, &fresh)?;
            print!("{report}");
            Ok(if report.is_empty() { exit::PASS } else { exit::CHECK_FAILED })
        }
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&eternal_cli::schema())?);
            Ok(exit::PASS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.is::<ConfigError>() || e.is::<MissingGolden>() {
                exit::CONFIG
            } else {
                exit::INTERNAL
            };
            ExitCode::from(code)
        }
    }
}
