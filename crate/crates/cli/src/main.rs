use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, ValueEnum};

use dyadic_lab_cli::{run_command, ExperimentConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    A2Sweep,
    ComplexitySweep,
    TwoWeight,
    Weak11,
    Carleson,
    Corona,
    Jn,
    Representation,
    Invariants,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::A2Sweep => "a2-sweep",
            Command::ComplexitySweep => "complexity-sweep",
            Command::TwoWeight => "two-weight",
            Command::Weak11 => "weak11",
            Command::Carleson => "carleson",
            Command::Corona => "corona",
            Command::Jn => "jn",
            Command::Representation => "representation",
            Command::Invariants => "invariants",
        }
    }
}

/// Dyadic shift and weighted-norm experiments.
#[derive(Debug, Parser)]
#[command(name = "dyadic-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to <out>/<command>/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo samples for the averaged kernel.
    #[arg(long)]
    samples: Option<usize>,
    /// Cells per side of the finest grid for norm sweeps.
    #[arg(long)]
    resolution: Option<usize>,
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(n) = cli.samples {
        cfg.samples = n;
    }
    if let Some(r) = cli.resolution {
        cfg.set_cells(r)?;
    }
    cfg.validate()?;
    let out = run_command(cli.command.name(), &cfg)?;
    out.write(&cfg.out)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: {} ({})",
        out.command,
        if out.passed { "ok" } else { "FAILED" },
        cfg.out.join(&out.command).display()
    );
    Ok(out.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
