mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::config::{thread_cap, Cli, Command};
use crate::error::{CliError, CliResult};

fn run(cli: &Cli) -> CliResult<Vec<String>> {
    let threads = thread_cap(std::env::var("GEOSCALE_THREADS").ok().as_deref())?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {n} worker threads: {e}")))?;
    }
    match &cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Estimate(args) => commands::estimate(args),
        Command::Compare(args) => commands::compare(args),
        Command::Smoothing(args) => commands::smoothing(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("GEOSCALE_LOG")
        .init();

    match run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
