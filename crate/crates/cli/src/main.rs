mod commands;
mod config;
mod plot;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use markoff_core::Error;
use serde_json::json;

use commands::{to_json, Command, FORMAT_VERSION};
use config::{CommonArgs, RunConfig};

/// Markoff-Hurwitz orbit counting and descent.
#[derive(Parser, Debug)]
#[command(name = "markoff", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

fn fail(class: &str, message: &str, code: u8) -> ExitCode {
    let v = json!({
        "formatVersion": FORMAT_VERSION,
        "error": { "class": class, "message": message },
    });
    eprintln!("{}", to_json(&v));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string().trim(), 2),
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.class(), &e.to_string(), if e.is_usage() { 2 } else { 1 }),
    }
}

fn run(cli: &Cli) -> Result<String, Error> {
    let cfg = RunConfig::resolve(&cli.common)?;
    let out = commands::run(&cli.command, &cfg)?;
    out.render(cfg.format)
}
