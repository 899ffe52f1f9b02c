mod args;
mod commands;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use output::{invalid, Invalid, RunConfig};

const DEFAULT_OUT: &str = "netlab-out";

fn resolve(cli: Cli) -> anyhow::Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => Some(commands::read_run_config(path)?),
        None => None,
    };
    let command = match (cli.command, &base) {
        (Some(c), _) => c,
        (None, Some(b)) => b.command.clone(),
        (None, None) => return Err(invalid("no subcommand given (see --help)")),
    };
    let seed = cli.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
    let out = cli
        .out
        .or(base.map(|b| b.out))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(RunConfig::new(seed, out, command))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let rc = resolve(cli)?;
    let mut outputs = commands::run(&rc)?;
    outputs.add_json("run_config.json", &rc.json());
    outputs.write(&rc.out)?;
    let mut stdout = std::io::stdout().lock();
    // A closed pipe (`| head`) is not a failure once the files are written.
    let _ = write!(stdout, "{}", outputs.report).and_then(|_| {
        writeln!(
            stdout,
            "{}: wrote {} files to {}",
            rc.command.name(),
            outputs.files.len(),
            rc.out.display()
        )
    });
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Invalid>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
