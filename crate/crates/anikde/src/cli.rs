//! Argument parsing and the run lifecycle shared by every subcommand.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Command};
use crate::config::{ExperimentConfig, Source};
use crate::error::{CliError, CliResult};
use crate::io::RunDir;
use crate::manifest::{RunManifest, Stopwatch};

#[derive(Debug, Parser)]
#[command(name = "anikde", version, about = "Adaptive anisotropic kernel density estimation experiments")]
pub struct Args {
    /// TOML config, or the manifest.json of an earlier run to repeat it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// The data file has a header line.
    #[arg(long, global = true)]
    pub header: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Kernel moments, majorant support and domination.
    KernelCheck,
    /// Adaptive fits of a data file on the evaluation grid.
    Estimate {
        /// Comma-separated sample, one point per line.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Seeded oracle inequality suite and residual decay.
    Oracle,
    /// Rate regime of a smoothness class.
    Regime,
    /// Packing and perturbed lower-bound densities.
    Lowerbound,
    /// Monte Carlo risk sweep and rate fit.
    Risk,
}

impl Cmd {
    fn command(&self) -> Command {
        match self {
            Cmd::KernelCheck => Command::KernelCheck,
            Cmd::Estimate { .. } => Command::Estimate,
            Cmd::Oracle => Command::Oracle,
            Cmd::Regime => Command::Regime,
            Cmd::Lowerbound => Command::Lowerbound,
            Cmd::Risk => Command::Risk,
        }
    }
}

/// Config with command-line overrides applied, as recorded in the manifest.
pub fn resolve(args: &Args) -> CliResult<ExperimentConfig> {
    let command = args.command.command();
    let mut cfg = match &args.config {
        Some(path) => {
            let (cfg, source) = ExperimentConfig::load(path)?;
            if let Source::Manifest { command: recorded, .. } = &source {
                if recorded != command.name() {
                    return Err(CliError::Config(format!(
                        "{}: manifest records `{recorded}`, not `{}`",
                        path.display(),
                        command.name()
                    )));
                }
            }
            cfg
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.directory = out.clone();
    }
    if args.header {
        cfg.estimate.header = true;
    }
    if let Cmd::Estimate { data: Some(data) } = &args.command {
        cfg.estimate.data = Some(data.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand and writes its manifest. Failed checks become a
/// verification error after the manifest is on disk.
pub fn execute(args: &Args) -> CliResult<()> {
    let cfg = resolve(args)?;
    let threads = match args.threads {
        Some(0) => return Err(CliError::Config("--threads: must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    let command = args.command.command();
    let mut run = RunDir::create(&cfg.output.directory)?;
    let mut clock = Stopwatch::default();
    let failures = pool.install(|| commands::run(command, &cfg, &mut run, &mut clock))?;
    RunManifest::new(command.name(), threads, &cfg, &clock, &run).write(&run)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

/// Parses `argv`, runs and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("anikde: {e}");
            e.exit_code()
        }
    }
}
