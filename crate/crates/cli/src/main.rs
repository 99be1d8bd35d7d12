mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{Format, RunConfig, SCHEMA};
use crate::error::CliError;
use crate::output::{write_run, RunManifest};

/// Counting and sampling expansive multisets.
#[derive(Parser)]
#[command(name = "expansive", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "expansive-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiprecision float arithmetic with this many bits (transform).
    #[arg(long, global = true)]
    precision: Option<usize>,
    /// Exact rational arithmetic (transform).
    #[arg(long, global = true)]
    exact: bool,
    /// Allow λ in the window band; formula values are still withheld.
    #[arg(long, global = true)]
    allow_window: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Exponential and product multiset transforms.
    Transform,
    /// Bivariate saddle points.
    Saddle,
    /// Phase-transition threshold N*.
    Nstar,
    /// Asymptotic formula values.
    Asym,
    /// Formulas against exact coefficients.
    Compare,
    /// Boltzmann draws of (size, count).
    Sample,
    /// Monte-Carlo estimate of a coefficient.
    Estimate,
    /// Local limit check for tilted sums.
    Llt,
    /// Sweep λ at fixed n.
    PhaseSweep,
    /// Slow-variation checks on h.
    CheckSv,
    /// Re-run the configuration recorded in a manifest.
    Replay,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Transform => "transform",
            Command::Saddle => "saddle",
            Command::Nstar => "nstar",
            Command::Asym => "asym",
            Command::Compare => "compare",
            Command::Sample => "sample",
            Command::Estimate => "estimate",
            Command::Llt => "llt",
            Command::PhaseSweep => "phase-sweep",
            Command::CheckSv => "check-sv",
            Command::Replay => "replay",
        }
    }
}

fn resolve(cli: &Cli) -> Result<(String, RunConfig), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    if let Command::Replay = cli.command {
        let text = std::fs::read_to_string(path)?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad manifest: {e}")))?;
        m.config.validate()?;
        return Ok((m.command, m.config));
    }
    let mut cfg = RunConfig::load(path)?;
    let name = cli.command.name().to_string();
    if let Some(c) = &cfg.command {
        if c != &name {
            return Err(CliError::Config(format!("config is for {c:?}, invoked as {name:?}")));
        }
    }
    cfg.command = Some(name.clone());
    cfg.format = cli.format.or(cfg.format).or(Some(Format::Csv));
    cfg.seed = cli.seed.or(cfg.seed);
    cfg.threads = cli.threads.or(cfg.threads);
    if cli.exact {
        cfg.exact = Some(true);
    }
    cfg.precision = cli.precision.or(cfg.precision);
    if cli.allow_window {
        cfg.allow_window = Some(true);
    }
    if cfg.seed.is_none() && matches!(name.as_str(), "sample" | "estimate") {
        cfg.seed = Some(commands::DEFAULT_SEED);
    }
    cfg.validate()?;
    Ok((name, cfg))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let (name, cfg) = resolve(cli)?;
    debug_assert_eq!(cfg.schema, SCHEMA);
    let threads = cfg.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let artifacts = pool.install(|| commands::run(&name, &cfg))?;
    let manifest = RunManifest {
        tool: "expansive".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name,
        arithmetic: commands::mode_of(&cfg).to_string(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg,
        outputs: Vec::new(),
    };
    write_run(&cli.out, &artifacts, manifest)?;
    for a in &artifacts {
        println!("{}", cli.out.join(&a.name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
