//! Batch front-end: threshold scans, verification suites, interpolation
//! probes, density evolution and entropy sweeps. Every run is reproducible
//! from the config file plus the recorded master seed.

mod commands;
mod config;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ldpclab",
    about = "MAP-entropy laboratory for LDPC ensembles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "ldpclab.toml")]
    config: PathBuf,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// MAP-threshold upper-bound scan over the noise grid.
    Threshold,
    /// Verification suites (identities, derivative formulas, series,
    /// bounds); nonzero exit on failure.
    Verify {
        /// Testing aid: inject a sign error into the pair-correlation term
        /// to demonstrate failure reporting.
        #[arg(long, value_parser = ["g2-sign"])]
        inject_fault: Option<String>,
    },
    /// Overlap-concentration probe (and optional sum-rule comparison).
    Probe,
    /// Density evolution to a fixed point; emits the population and a
    /// moment trace.
    De,
    /// Conditional-entropy sweep over sampled graphs.
    Entropy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let loaded = config::load(&cli.config, cli.seed)?;
    let workers = if cli.workers > 0 {
        cli.workers
    } else {
        loaded.config.workers
    };
    if workers > 0 {
        // Determinism never depends on the pool size; this only bounds
        // parallelism.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Threshold => commands::threshold(&loaded, &cli.out)?,
        Command::Verify { inject_fault } => {
            let ok = commands::verify(&loaded, &cli.out, inject_fault.as_deref())?;
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Probe => commands::probe(&loaded, &cli.out)?,
        Command::De => commands::density_evolution(&loaded, &cli.out)?,
        Command::Entropy => commands::entropy(&loaded, &cli.out)?,
    }
    Ok(ExitCode::SUCCESS)
}
