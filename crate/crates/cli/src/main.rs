use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use ccwgd_cli::commands;
use ccwgd_cli::config::{self, BaChannelSpec, BaConfig, CapacityConfig, RdConfig, ResolvePaths, SweepConfig};
use ccwgd_cli::{presets, CliError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ccwgd",
    version,
    about = "Capacity-cost and rate-distortion solvers for continuous channels"
)]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Name of a shipped preset, e.g. `awgn-p1`.
    #[arg(long)]
    preset: Option<String>,

    /// Output directory, created if missing.
    #[arg(long, default_value = "ccwgd-out")]
    out: PathBuf,

    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capacity-cost point by particle descent.
    Capacity(RunArgs),
    /// Rate-distortion point for a sampled source.
    Rd(RunArgs),
    /// Blahut-Arimoto on a finite transition matrix.
    Ba {
        #[command(flatten)]
        run: RunArgs,
        /// Transition matrix CSV, used instead of a config.
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        matrix: Option<PathBuf>,
        /// Per-input cost CSV (one row or column).
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["lambdas", "budget"])]
        lambda: Option<f64>,
        /// Comma-separated multipliers; writes one CSV row per value.
        #[arg(long, value_delimiter = ',', conflicts_with = "budget")]
        lambdas: Option<Vec<f64>>,
        /// Cost budget; the multiplier is found by bisection.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Capacity over a grid of budgets or multipliers, solved in parallel.
    Sweep(RunArgs),
    /// Finite-difference gradient checks of every channel model.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load<T: DeserializeOwned + ResolvePaths>(args: &RunArgs) -> Result<T> {
    match (&args.config, &args.preset) {
        (Some(path), _) => config::load(path),
        (None, Some(name)) => {
            let text = presets::lookup(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown preset `{name}`; available: {}",
                    presets::names().join(", ")
                ))
            })?;
            let mut cfg: T = config::parse_json(text, &format!("preset {name}"))?;
            cfg.resolve_paths(Path::new("."));
            Ok(cfg)
        }
        (None, None) => Err(CliError::Config("one of --config or --preset is required".into())),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Capacity(args) => {
            let mut cfg: CapacityConfig = load(&args)?;
            if let Some(s) = args.seed {
                cfg.solver.seed = s;
            }
            let r = commands::run_capacity(&cfg, &args.out)?;
            println!(
                "rate_nats={:?} cost={:?} lambda={:?} iterations={} stop_reason={}",
                r.rate_nats, r.cost, r.lambda, r.iterations, r.stop_reason
            );
        }
        Command::Rd(args) => {
            let mut cfg: RdConfig = load(&args)?;
            if let Some(s) = args.seed {
                cfg.solver.seed = s;
            }
            let r = commands::run_rd(&cfg, &args.out)?;
            println!(
                "rate_nats={:?} distortion={:?} lambda={:?} iterations={} stop_reason={}",
                r.rate_nats, r.distortion, r.lambda, r.iterations, r.stop_reason
            );
        }
        Command::Ba {
            run,
            matrix,
            costs,
            lambda,
            lambdas,
            budget,
        } => {
            let mut cfg: BaConfig = match matrix {
                Some(path) => BaConfig {
                    channel: BaChannelSpec::Csv { path },
                    costs: None,
                    costs_path: None,
                    lambda: None,
                    lambdas: None,
                    budget: None,
                    options: Default::default(),
                },
                None => load(&run)?,
            };
            if costs.is_some() {
                cfg.costs = None;
                cfg.costs_path = costs;
            }
            if lambda.is_some() || lambdas.is_some() || budget.is_some() {
                cfg.lambda = lambda;
                cfg.lambdas = lambdas;
                cfg.budget = budget;
            }
            let r = commands::run_ba(&cfg, &run.out)?;
            for p in &r.points {
                println!(
                    "lambda={:?} rate_nats={:?} cost={:?} iterations={} converged={}",
                    p.lambda, p.rate_nats, p.cost, p.iterations, p.converged
                );
            }
        }
        Command::Sweep(args) => {
            let mut cfg: SweepConfig = load(&args)?;
            if let Some(s) = args.seed {
                cfg.base.solver.seed = s;
            }
            let rows = commands::run_sweep(&cfg, &args.out)?;
            for r in &rows {
                println!("{}", r.csv_row());
            }
        }
        Command::Check { seed } => {
            let rows = commands::run_check(seed)?;
            for r in &rows {
                println!(
                    "{:<16} max_rel_error={:.3e} {}",
                    r.name,
                    r.max_rel_error,
                    if r.pass { "ok" } else { "FAIL" }
                );
            }
            let failed = rows.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(CliError::CheckFailed(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CCWGD_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
