use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tmf_cli::commands;
use tmf_cli::config::{parse_list, Environment, ExperimentConfig, ExperimentId};

#[derive(Parser)]
#[command(name = "tmf", version, about = "Temporal mean-field experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (replicate i trains with seed + i).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    num_seeds: Option<usize>,
    #[arg(long, global = true)]
    eval_rollouts: Option<usize>,
    /// Training iterations for whichever game is trained.
    #[arg(long, global = true)]
    iterations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and record its learning curve.
    Train(EnvArg),
    /// Resource game: welfare against batch size.
    BSweep {
        /// Comma-separated batch sizes.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Resource game: fluctuations and prediction error against population size.
    Concentration {
        /// Comma-separated population sizes.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Resource game: prediction error over population and batch sizes.
    PredictionGrid {
        #[arg(long)]
        populations: Option<String>,
        #[arg(long)]
        batches: Option<String>,
    },
    /// Queueing game: TMF-PG against the myopic baseline.
    DqgSweep {
        #[arg(long, value_enum, default_value_t = SweepArg::All)]
        sweep: SweepArg,
        /// Comma-separated values for the chosen sweep.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Fixed-point equilibrium solve with exploitability checks.
    SolveEq(EnvArg),
    /// Estimated regularity constants and the sufficient conditions.
    CheckConditions(EnvArg),
}

#[derive(Args)]
struct EnvArg {
    #[arg(long, value_enum)]
    env: Option<EnvChoice>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvChoice {
    Srsg,
    Dqg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepArg {
    N,
    Kappa,
    Horizon,
    All,
}

fn apply_env(cfg: &mut ExperimentConfig, env: &EnvArg) {
    match env.env {
        Some(EnvChoice::Srsg) => cfg.environment = Environment::Srsg,
        Some(EnvChoice::Dqg) => cfg.environment = Environment::Dqg,
        None => {}
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{} grid point(s) failed:", failures.len());
            for f in &failures {
                eprintln!("  {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<Vec<String>> {
    let g = cli.global;
    if let Some(jobs) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = g.out {
        cfg.out = out;
    }
    if let Some(n) = g.num_seeds {
        cfg.num_seeds = n;
    }
    if let Some(n) = g.eval_rollouts {
        cfg.num_eval_rollouts = n;
    }
    if let Some(k) = g.iterations {
        cfg.srsg_train.iterations = Some(k);
        cfg.dqg_train.iterations = Some(k);
    }

    let mut jobs: Vec<ExperimentId> = Vec::new();
    match &cli.command {
        Command::Train(env) => {
            apply_env(&mut cfg, env);
            jobs.push(ExperimentId::Train);
        }
        Command::SolveEq(env) => {
            apply_env(&mut cfg, env);
            jobs.push(ExperimentId::SolveEq);
        }
        Command::CheckConditions(env) => {
            apply_env(&mut cfg, env);
            jobs.push(ExperimentId::CheckConditions);
        }
        Command::BSweep { grid } => {
            if let Some(g) = grid {
                cfg.grid.batch_sizes = parse_list(g)?;
            }
            jobs.push(ExperimentId::SrsgBSweep);
        }
        Command::Concentration { grid } => {
            if let Some(g) = grid {
                cfg.grid.populations = parse_list(g)?;
            }
            jobs.push(ExperimentId::SrsgConcentration);
        }
        Command::PredictionGrid { populations, batches } => {
            if let Some(g) = populations {
                cfg.grid.prediction_populations = parse_list(g)?;
            }
            if let Some(g) = batches {
                cfg.grid.prediction_batches = parse_list(g)?;
            }
            jobs.push(ExperimentId::SrsgPredictionGrid);
        }
        Command::DqgSweep { sweep, grid } => {
            if let Some(g) = grid {
                match sweep {
                    SweepArg::N => cfg.grid.dqg_populations = parse_list(g)?,
                    SweepArg::Kappa => cfg.grid.kappas = parse_list(g)?,
                    SweepArg::Horizon => cfg.grid.horizons = parse_list(g)?,
                    SweepArg::All => anyhow::bail!("--grid needs a single --sweep"),
                }
            }
            if matches!(sweep, SweepArg::N | SweepArg::All) {
                jobs.push(ExperimentId::DqgNSweep);
            }
            if matches!(sweep, SweepArg::Kappa | SweepArg::All) {
                jobs.push(ExperimentId::DqgKappaSweep);
            }
            if matches!(sweep, SweepArg::Horizon | SweepArg::All) {
                jobs.push(ExperimentId::DqgHorizonSweep);
            }
        }
    }

    let mut failures = Vec::new();
    let several = jobs.len() > 1;
    for id in jobs {
        let out = if several {
            cfg.out.join(id.as_str())
        } else {
            cfg.out.clone()
        };
        let outcome = commands::run(id, &cfg, &out)?;
        log::info!("{} -> {}", id.as_str(), out.display());
        failures.extend(outcome.failures);
    }
    Ok(failures)
}
