mod cli;
mod commands;
mod config;
mod output;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};

fn run() -> anyhow::Result<String> {
    let args = config::inject_config(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    log::debug!("running {}", cli.command.name());
    match &cli.command {
        Command::Align(a) => commands::align::run(a, cli.seed),
        Command::Rank(a) => commands::rank::run(a, cli.seed),
        Command::Rerank(a) => commands::rerank::run(a, cli.seed),
        Command::Eval(a) => commands::eval::run(a, cli.seed),
        Command::Finetune(a) => commands::finetune::run(a, cli.seed),
        Command::Analyze(a) => commands::analyze::run(a, cli.seed),
        Command::Stats(a) => commands::stats::run(a, cli.seed),
        Command::Convert(a) => commands::convert::run(a, cli.seed),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
