mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use hgsum::ErrorKind;

use args::{Cli, Command};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERIC: u8 = 3;

fn run(cli: &Cli) -> hgsum::Result<u8> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Command::Train => commands::train(&cfg)?,
        Command::Summarize { checkpoint, vocab, input, output } => {
            commands::summarize_clusters(&cfg, checkpoint, vocab, input, output)?
        }
        Command::Eval { generated, references } => commands::eval(&cfg, generated, references)?,
        Command::Ksweep { ks, checkpoint, vocab } => commands::sweep(&cfg, ks, checkpoint, vocab)?,
        Command::Graph => {
            if commands::graph(&cfg)? > 0 {
                return Ok(DATA);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapKind::DisplayHelp | ClapKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => USAGE,
                ErrorKind::Data => DATA,
                ErrorKind::Numeric => NUMERIC,
            })
        }
    }
}
