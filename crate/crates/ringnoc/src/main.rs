use std::fs::File;
use std::io::{self, Write};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ringnoc::{exit_code, run_compare, run_spec, write_compare_csv, write_csv, Exit, RunRecord, RunSpec, Settings};

/// Cycle-accurate mesh NoC simulator with ring and virtual-channel routers.
#[derive(Debug, Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one design (the default when no subcommand is given).
    Run(Settings),
    /// Run base1, base2 and ring on the same traffic; latencies normalized to base1.
    Compare(Settings),
}

fn emit(spec: &RunSpec, records: &[RunRecord], compare: bool) -> anyhow::Result<()> {
    let sink: Box<dyn Write> = match &spec.out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    if compare {
        write_compare_csv(sink, records)?;
    } else {
        write_csv(sink, records)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Exit::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (settings, compare) = match cli.command {
        Some(Command::Run(s)) => (s, false),
        Some(Command::Compare(s)) => (s, true),
        None => (cli.run, false),
    };
    let spec = match settings.resolve() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Exit::Usage as u8);
        }
    };
    let records = if compare { run_compare(&spec) } else { run_spec(&spec) };
    for rec in &records {
        if let Err(e) = &rec.result {
            eprintln!("{} at rate {}: {e}", rec.config.design, rec.config.rate);
        }
    }
    if let Err(e) = emit(&spec, &records, compare) {
        eprintln!("error: {e:#}");
        return ExitCode::from(Exit::Fault as u8);
    }
    ExitCode::from(exit_code(&records) as u8)
}
