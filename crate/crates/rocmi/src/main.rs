use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rocmi::commands::{cmd_analyze, cmd_calibrate, cmd_report, cmd_simulate};
use rocmi::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "rocmi",
    version,
    about = "AUC confidence intervals under missing disease status"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults reproduce the published grid.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Re-derive β₁, prevalence, thresholds and missing rates.
    Calibrate,
    /// Run the simulation grid and write results, summary and tables.
    Simulate,
    /// Pooled intervals for the dataset named in the config.
    Analyze,
    /// Rebuild summary and tables from an existing results.csv.
    Report,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(r) = cli.replicates {
        cfg.run.replicates = r;
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.run.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Calibrate => {
            let path = cmd_calibrate(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Simulate => {
            let summaries = cmd_simulate(&cfg)?;
            let invalid: usize = summaries.iter().map(|s| s.n_invalid).sum();
            println!(
                "{} summary cells ({} invalid replicate results) written to {}",
                summaries.len(),
                invalid,
                cfg.run.out.display()
            );
        }
        Command::Analyze => {
            let results = cmd_analyze(&cfg)?;
            for r in &results {
                match &r.ci {
                    Some(ci) => println!(
                        "{:<9}{:<5}{:.4}  ({:.4}, {:.4})",
                        r.arm.label(),
                        r.method.label(),
                        r.point,
                        ci.lower,
                        ci.upper
                    ),
                    None => println!(
                        "{:<9}{:<5}invalid: {}",
                        r.arm.label(),
                        r.method.label(),
                        r.failure_reason.as_deref().unwrap_or("")
                    ),
                }
            }
        }
        Command::Report => {
            let summaries = cmd_report(&cfg)?;
            println!("{} summary cells written to {}", summaries.len(), cfg.run.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
