mod args;
mod commands;
mod output;

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use output::{CliError, Run, USAGE};

fn dispatch(cli: &Cli, matches: &clap::ArgMatches, argv: Vec<String>) -> Result<(), CliError> {
    let name = match &cli.command {
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Predict(_) => "predict",
        Command::Ensemble(_) => "ensemble",
        Command::Analyze(_) => "analyze",
        Command::GenSynthetic(_) => "gen-synthetic",
        Command::Gradcheck(_) => "gradcheck",
    };
    let mut run = Run::new(name, argv, cli.data_dir.clone());
    match &cli.command {
        Command::Train(a) => {
            let sub = matches.subcommand_matches("train").expect("train matches");
            commands::train(a, sub, cli.format, &mut run)?
        }
        Command::Evaluate(a) => commands::evaluate_cmd(a, cli.format, &mut run)?,
        Command::Predict(a) => commands::predict(a, cli.format, &mut run)?,
        Command::Ensemble(a) => commands::ensemble(a, cli.format, &mut run)?,
        Command::Analyze(a) => commands::analyze(a, cli.format, &mut run)?,
        Command::GenSynthetic(a) => commands::gen_synthetic_cmd(a, &mut run)?,
        Command::Gradcheck(a) => return commands::gradcheck(a),
    }
    run.commit()
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { USAGE } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return USAGE;
        }
    };
    let argv = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(&cli, &matches, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("asreader: {}", e.message);
            e.code
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}
