mod args;
mod commands;
mod config;
mod report;

use clap::Parser;

use args::{Cli, Command};
use commands::CliError;

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Degrade(a) => commands::cmd_degrade(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Infer(a) => commands::cmd_infer(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Gradcheck(a) => commands::cmd_gradcheck(a),
        Command::Selftest(a) => commands::cmd_selftest(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    ddcn_core::parallel::set_threads(cli.threads);
    match dispatch(&cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code());
        }
    }
}
