use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kfp_cli::compare::compare;
use kfp_cli::config::{Config, Mode};
use kfp_cli::run::{run, with_jobs};
use kfp_cli::CliError;

/// Solvers for Dirichlet problems of kinetic Kolmogorov-Fokker-Planck type.
#[derive(Parser)]
#[command(name = "kfp", version)]
struct Cli {
    /// Worker threads; the KFP_JOBS environment variable takes precedence.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "kfp-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Bounded solve: direct unless the config asks for variational.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Use the variational solver.
        #[arg(long)]
        variational: bool,
    },
    /// Refinement study with a convergence table.
    Battery(RunArgs),
    /// Algebraic identities, boundary classification and ellipticity checks.
    Verify {
        /// Configuration; the built-in default box when omitted.
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "kfp-out")]
        out: PathBuf,
    },
    /// Relative differences between two runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Largest accepted relative L² difference between fields.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// Largest accepted difference in standard errors against probes.
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
    },
    /// Monte-Carlo estimates at the configured probes.
    Mc {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exhaustion of a graph domain by bounded boxes.
    Exhaust(RunArgs),
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("KFP_JOBS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::config(format!("KFP_JOBS must be a positive integer, got {v:?}"))),
        _ => Ok(flag),
    }
}

fn execute(mut cfg: Config, mode: Mode, out: &Path, jobs: Option<usize>) -> Result<bool, CliError> {
    cfg.mode = mode;
    cfg.check_mode()?;
    let output = with_jobs(jobs, || run(&cfg, out))??;
    print!("{}", output.summary);
    println!("artifacts in {}", output.dir.display());
    Ok(output.passed)
}

fn default_config() -> Config {
    Config::parse(r#"{"schema_version": 1, "mode": "verify"}"#, "<default>").expect("default config is valid")
}

fn main_inner(cli: Cli) -> Result<bool, CliError> {
    let jobs = jobs(cli.jobs)?;
    match cli.command {
        Command::Solve { run, variational } => {
            let cfg = Config::load(&run.config)?;
            let mode = if variational || cfg.mode == Mode::Variational {
                Mode::Variational
            } else {
                Mode::Direct
            };
            execute(cfg, mode, &run.out, jobs)
        }
        Command::Battery(run) => execute(Config::load(&run.config)?, Mode::Battery, &run.out, jobs),
        Command::Verify { config, out } => {
            let cfg = match config {
                Some(p) => Config::load(&p)?,
                None => default_config(),
            };
            execute(cfg, Mode::Verify, &out, jobs)
        }
        Command::Compare { a, b, tolerance, sigmas } => {
            let report = compare(&a, &b, tolerance, sigmas)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.within)
        }
        Command::Mc { run, paths, seed } => {
            let mut cfg = Config::load(&run.config)?;
            if let Some(p) = paths {
                cfg.montecarlo.paths = p;
            }
            if let Some(s) = seed {
                cfg.montecarlo.seed = s;
            }
            execute(cfg, Mode::Montecarlo, &run.out, jobs)
        }
        Command::Exhaust(run) => execute(Config::load(&run.config)?, Mode::Exhaustion, &run.out, jobs),
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: numerical checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
