use std::io::{IsTerminal, Write};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use env_logger::WriteStyle;
use log::LevelFilter;

use qmarkov_cli::{dispatch, Cli};

fn run(cli: &Cli, color: bool) -> Result<()> {
    let output = dispatch(&cli.command)?;
    let json = output.report.to_json();
    match (&output.csv, &cli.out) {
        (Some(csv), Some(path)) => {
            std::fs::write(path, csv.render()).with_context(|| format!("cannot write {}", path.display()))?;
            print!("{json}");
        }
        (Some(csv), None) => print!("{}", csv.render()),
        (None, Some(path)) => {
            std::fs::write(path, &json).with_context(|| format!("cannot write {}", path.display()))?
        }
        (None, None) => print!("{json}"),
    }
    std::io::stdout().flush()?;
    let mut err = std::io::stderr();
    for w in &output.report.warnings {
        if color {
            writeln!(err, "\x1b[33mwarning:\x1b[0m {w}")?;
        } else {
            writeln!(err, "warning: {w}")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let color = !cli.plain && std::io::stderr().is_terminal();
    env_logger::Builder::new()
        .filter_level(LevelFilter::Warn)
        .write_style(if color { WriteStyle::Always } else { WriteStyle::Never })
        .init();
    match run(&cli, color) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if color {
                eprintln!("\x1b[31merror:\x1b[0m {e:#}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
