use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use relperf_cli::commands::{
    cmd_best_response, cmd_nash, cmd_report, cmd_simulate, cmd_verify, resolve_out_dir,
};
use relperf_cli::config::{default_config, Overrides, RunConfig};

/// Forward relative performance criteria for two competing fund managers:
/// simulation, closed-form strategies and numerical certification.
#[derive(Parser)]
#[command(name = "relperf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON). `verify` falls back to the built-in
    /// default scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured ensemble size.
    #[arg(long = "paths", global = true)]
    paths: Option<usize>,

    /// Override the configured uniform time step.
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Worker threads; results are independent of this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory, overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured scenario and write CSV series.
    Simulate,
    /// Emit manager 1's closed-form best response along one path.
    BestResponse,
    /// Solve the forward Nash equilibrium for CRRA managers.
    Nash,
    /// Run the full verification suite and record verdicts.
    Verify,
    /// Summarize a finished run directory.
    Report {
        /// Directory holding the run's manifest.
        run_dir: PathBuf,
    },
}

fn load_config(cli: &Cli, allow_default: bool) -> Result<RunConfig> {
    let overrides = Overrides {
        seed: cli.seed,
        n_paths: cli.paths,
        dt: cli.dt,
    };
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if allow_default => default_config(),
        None => anyhow::bail!("--config is required for this command"),
    };
    Ok(cfg.with_overrides(&overrides))
}

fn with_pool<F>(threads: Option<usize>, f: F) -> Result<bool>
where
    F: FnOnce() -> Result<bool> + Send,
{
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(f)
        }
        None => f(),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let threads = cli.threads;
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(&cli, false)?;
            let out = resolve_out_dir(&cfg, cli.out.as_deref());
            with_pool(threads, || {
                let manifest = cmd_simulate(&cfg, &out)?;
                println!(
                    "wrote series.csv, terminal.csv, strategies.csv, manifest.json to {}",
                    out.display()
                );
                Ok(manifest.all_passed())
            })
        }
        Command::BestResponse => {
            let cfg = load_config(&cli, false)?;
            let out = resolve_out_dir(&cfg, cli.out.as_deref());
            with_pool(threads, || {
                let manifest = cmd_best_response(&cfg, &out)?;
                println!(
                    "wrote best_response.csv, manifest.json to {}",
                    out.display()
                );
                Ok(manifest.all_passed())
            })
        }
        Command::Nash => {
            let cfg = load_config(&cli, false)?;
            let out = resolve_out_dir(&cfg, cli.out.as_deref());
            with_pool(threads, || {
                let manifest = cmd_nash(&cfg, &out)?;
                println!("wrote nash.csv, manifest.json to {}", out.display());
                Ok(manifest.all_passed())
            })
        }
        Command::Verify => {
            let cfg = load_config(&cli, true)?;
            let out = resolve_out_dir(&cfg, cli.out.as_deref());
            with_pool(threads, || {
                let manifest = cmd_verify(&cfg, &out)?;
                println!("manifest written to {}", out.display());
                Ok(manifest.all_passed())
            })
        }
        Command::Report { run_dir } => {
            let manifest = cmd_report(run_dir)?;
            Ok(manifest.all_passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
