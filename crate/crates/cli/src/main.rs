//! Command-line front end: balancing, replication studies, coverage runs,
//! simulation dumps and dataset preparation. Every command writes its
//! results and one `manifest.json` into the output directory, and prints a
//! JSON status line on stdout.

mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use serde::Serialize;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult, ErrorReport};
use crate::output::{resolve_out_dir, Run, Timings};

#[derive(Serialize)]
struct Success {
    status: &'static str,
    outputs: Vec<String>,
}

fn print_json<T: Serialize>(value: &T) {
    match serde_json::to_string(value) {
        Ok(text) => println!("{text}"),
        Err(e) => eprintln!("failed to encode status: {e}"),
    }
}

fn run(cli: Cli) -> CliResult<Vec<String>> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size the worker pool: {e}")))?;
    }
    let started = Instant::now();
    let (name, config) = match &cli.command {
        Command::Balance(a) => ("balance", serde_json::to_value(a)?),
        Command::Replicate(a) => ("replicate", serde_json::to_value(a)?),
        Command::Coverage(a) => ("coverage", serde_json::to_value(a)?),
        Command::Simulate(a) => ("simulate", serde_json::to_value(a)?),
        Command::Prepare(a) => ("prepare", serde_json::to_value(a)?),
    };
    let mut out = Run::new(resolve_out_dir(cli.out.clone()), name, config)?;
    match &cli.command {
        Command::Balance(a) => commands::balance(&mut out, a)?,
        Command::Replicate(a) => commands::replicate(&mut out, a)?,
        Command::Coverage(a) => commands::coverage(&mut out, a)?,
        Command::Simulate(a) => commands::simulate(&mut out, a)?,
        Command::Prepare(a) => commands::prepare(&mut out, a)?,
    }
    let timings = cli.timings.then(|| Timings {
        total_seconds: started.elapsed().as_secs_f64(),
    });
    let paths = out.finish(timings)?;
    Ok(paths.iter().map(|p| p.display().to_string()).collect())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim().to_string());
            print_json(&ErrorReport::new(err.kind(), err.exit_code(), err.to_string()));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(outputs) => {
            print_json(&Success { status: "ok", outputs });
            ExitCode::SUCCESS
        }
        Err(err) => {
            print_json(&ErrorReport::new(err.kind(), err.exit_code(), err.to_string()));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
