mod args;
mod commands;
mod config;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;

pub const EXIT_GEN: u8 = 2;
pub const EXIT_TRAIN: u8 = 3;
pub const EXIT_ANALYZE: u8 = 4;
pub const EXIT_REPORT: u8 = 5;

/// Failure of one pipeline stage; `code` is the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn new(code: u8, msg: impl Into<String>) -> Self {
        CliError {
            code,
            msg: msg.into(),
        }
    }
}

fn stage_code(cmd: &Command) -> u8 {
    match cmd {
        Command::Gen(_) => EXIT_GEN,
        Command::Train(_) | Command::Sweep(_) => EXIT_TRAIN,
        Command::Analyze(_) => EXIT_ANALYZE,
        Command::Report(_) => EXIT_REPORT,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let code = stage_code(&cli.command);
    let file = FileConfig::load(cli.config.as_deref(), code)?;
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::new(code, "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(code, format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => commands::gen(&a, &file),
        Command::Train(a) => commands::train(&a, &file),
        Command::Sweep(a) => commands::sweep(&a, &file),
        Command::Analyze(a) => commands::analyze(&a, &file),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
