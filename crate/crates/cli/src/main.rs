//! Command-line entry point: every experiment as a subcommand over one
//! JSON config, with deterministic artifacts.
//!
//! All failures leave a single machine-readable JSON line on standard
//! error and exit with the class of the failure: 2 for configuration
//! errors, 3 for numerical failures, 4 for data and cache errors.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use refdiff_core::cache::SpectrumCache;
use refdiff_core::error::{Error, Result};

use commands::Context;
use config::{CommandKind, ExperimentConfig};
use io::OutputDir;

#[derive(Parser)]
#[command(
    name = "refdiff",
    version,
    about = "Reflected-diffusion experiments: simulation, spectra, estimation, \
             posterior sampling, certificates, and stability tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; created when missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Replaces the seed of this command's stochastic stage.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for replicate and family parallelism.
    #[arg(long, value_name = "INT")]
    jobs: Option<usize>,
    /// Demand cache hits for every named decomposition instead of
    /// recomputing on a miss.
    #[arg(long)]
    require_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a low-frequency observation record from the truth.
    Simulate(RunArgs),
    /// Decompose the truth generator and record its spectrum.
    Spectrum(RunArgs),
    /// Project transition data onto a reference basis and report its error.
    Estimate(RunArgs),
    /// Run a pCN chain and dump trace, draws, and the posterior mean field.
    Posterior(RunArgs),
    /// Certify the gradient condition for the first eigenblock.
    Conditions(RunArgs),
    /// Tabulate stability ratios over a perturbation family.
    Metrics(RunArgs),
    /// Fit the estimator's error-decay slope over a sample-size ladder.
    Rates(RunArgs),
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Simulate(_) => CommandKind::Simulate,
            Command::Spectrum(_) => CommandKind::Spectrum,
            Command::Estimate(_) => CommandKind::Estimate,
            Command::Posterior(_) => CommandKind::Posterior,
            Command::Conditions(_) => CommandKind::Conditions,
            Command::Metrics(_) => CommandKind::Metrics,
            Command::Rates(_) => CommandKind::Rates,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Spectrum(a)
            | Command::Estimate(a)
            | Command::Posterior(a)
            | Command::Conditions(a)
            | Command::Metrics(a)
            | Command::Rates(a) => a,
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    let class = err.class();
    eprintln!("{}", json!({ "error": class.name(), "message": err.to_string() }));
    ExitCode::from(class.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&Error::Config(e.to_string())),
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn run(command: &Command) -> Result<()> {
    let args = command.args();
    let kind = command.kind();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }

    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(kind, seed)?;
    }
    let grid = cfg.domain.build()?;

    let cache_dir = match &cfg.cache_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => args.out.join(p),
        None => args.out.join("cache"),
    };
    let cache = SpectrumCache::open(&cache_dir)?;
    // Flags that change outputs are folded in before recording; performance
    // flags (--jobs, --require-cache) are not part of the resolved config
    // because they must not change any artifact.
    let resolved = json!({ "command": kind.name(), "experiment": &cfg });

    let mut out = OutputDir::create(&args.out)?;
    let mut ctx = Context {
        config: &cfg,
        grid,
        cache,
        require_cache: args.require_cache,
        out: &mut out,
    };
    match kind {
        CommandKind::Simulate => commands::simulate::run(&mut ctx)?,
        CommandKind::Spectrum => commands::spectrum::run(&mut ctx)?,
        CommandKind::Estimate => commands::estimate::run(&mut ctx)?,
        CommandKind::Posterior => commands::posterior::run(&mut ctx)?,
        CommandKind::Conditions => commands::conditions::run(&mut ctx)?,
        CommandKind::Metrics => commands::metrics::run(&mut ctx)?,
        CommandKind::Rates => commands::rates::run(&mut ctx)?,
    }
    ctx.out.write_json("config.json", &resolved)?;
    out.finish()
}
