//! Command line driver for two-grid and multigrid convergence-bound
//! experiments.
//!
//! Exit codes: 0 on success, 1 when any recorded invariant check failed or
//! a pipeline errored, 2 on configuration errors.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use report::Format;

#[derive(Parser)]
#[command(
    name = "mgbound",
    about = "Two-grid and multigrid convergence factors and bounds for SPD model problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format: csv | structured | both (overrides output.format).
    #[arg(long, global = true)]
    format: Option<String>,

    /// Seed override for the problem and coarse perturbation generators.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on dense analysis dimension (overrides analysis.dense_cap).
    #[arg(long, global = true)]
    dense_cap: Option<usize>,

    /// Worker threads for instance-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Write the coarse/fine split of the transfer operator.
    #[arg(long, global = true)]
    dump_split: bool,

    /// Override a config entry, e.g. --set problem.n=63
    #[arg(long = "set", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one two-grid instance and every bound on it.
    Twogrid,
    /// Build a hierarchy and evaluate the level bounds.
    Multigrid,
    /// Sweep coarse-matrix perturbations (scale sweep or randomized suite).
    Sweep,
    /// Run the built-in verification checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Command::Selftest = cli.command {
        return match run::selftest() {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{e:#}");
                ExitCode::from(1)
            }
        };
    }

    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };

    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("thread pool: {e}");
        }
    }

    let result = match cli.command {
        Command::Twogrid => run::run_twogrid(&cfg),
        Command::Multigrid => run::run_multigrid(&cfg),
        Command::Sweep => run::run_sweep(&cfg),
        Command::Selftest => unreachable!("handled above"),
    };

    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("pipeline error: {e:#}");
            return ExitCode::from(1);
        }
    };

    let dir = PathBuf::from(&cfg.output.dir);
    let format = Format::parse(&cfg.output.format);
    match report::emit(&report, &dir, format) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("emit error: {e:#}");
            return ExitCode::from(1);
        }
    }

    let failures = run::failed_rows(&report);
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &failures {
            eprintln!("invariant check failed: {f}");
        }
        ExitCode::from(1)
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Some(format) = &cli.format {
        cfg.output.format = format.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.problem.seed = seed;
        cfg.coarse.seed = seed;
    }
    if let Some(cap) = cli.dense_cap {
        cfg.analysis.dense_cap = cap;
    }
    if cli.dump_split {
        cfg.output.dump_split = true;
    }
    cfg.validate()?;
    Ok(cfg)
}
