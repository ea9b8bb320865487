//! `somnoflow` command-line tool.
//!
//! Exit status: 0 on success, 1 for usage and validation errors, 2 for I/O
//! failures.

mod args;
mod commands;
mod error;
mod serve;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::FromArgMatches;

use args::{Cli, Command};
use error::CliError;

fn run(argv: Vec<OsString>) -> Result<(), CliError> {
    let argv = args::expand_config(argv)?;
    let cli = match args::command().try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Err(CliError::Invalid(String::new()))
            } else {
                Ok(())
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Infer(a) => commands::infer(a),
        Command::Events(a) => commands::events(a),
        Command::Eval(a) => commands::eval(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Serve(a) => serve::serve(a),
        Command::Plotdata(a) => commands::plotdata(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
