mod args;
mod commands;
mod files;
mod table;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use files::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.parallel as usize)
        .build_global()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    let parallel = cli.parallel > 1;
    match &cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::TrainNn(a) => commands::train_nn(a, cli.seed, parallel),
        Command::ScoreNn(a) => commands::score_nn(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
