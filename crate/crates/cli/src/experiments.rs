//! Seeded sweeps over the two games. Every runner fans its (grid point, seed)
//! tasks out over the rayon pool and returns rows in grid-then-seed order, so
//! results do not depend on the number of worker threads.

use anyhow::{anyhow, bail, Result};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use tmf_core::dynamics::{check_uniqueness_condition, estimate_lipschitz, roll_forward, ContractionReport};
use tmf_core::environments::{make_dqg, make_srsg, DqgConfig, SrsgConfig};
use tmf_core::equilibrium::{activity_profile, exploitability, solve_equilibrium, Exploitability, SolverTrace};
use tmf_core::learning::{simulate, train, HistoryRow, TrainConfig};
use tmf_core::metrics::{fit_decay_slope, prediction_error, welfare_stats, ConcentrationSeries, PredictionMode};
use tmf_core::{rng, Distribution, MeanFieldModel, Policy, PolicyParams, ProtocolSchedule, TrajectoryRecord};

use crate::config::{Environment, ExperimentConfig};

/// Evaluation rollout `j` of training seed `s` uses stream `EVAL_STREAM + j`
/// of seed `s`; training streams stay far below it.
pub const EVAL_STREAM: u64 = 1 << 40;
/// Streams for Lipschitz sampling and other diagnostics.
pub const DIAGNOSTIC_STREAM: u64 = 1 << 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "tmf-pg")]
    TmfPg,
    #[serde(rename = "myopic")]
    Myopic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TmfPg => "tmf-pg",
            Self::Myopic => "myopic",
        }
    }
}

/// Result of one evaluation rollout.
#[derive(Debug, Clone, Copy)]
struct EvalRun {
    welfare: f64,
    error_mean: f64,
    error_max: f64,
}

fn evaluate<M, P>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    seed: u64,
    rollouts: usize,
    planned: Option<&TrajectoryRecord>,
) -> Result<Vec<EvalRun>>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    (0..rollouts as u64)
        .map(|j| {
            let sim = simulate(policy, model, schedule, mu0, &mut rng::stream(seed, EVAL_STREAM + j))?;
            let (error_mean, error_max) = match planned {
                Some(p) => (
                    prediction_error(p, &sim.trajectory, PredictionMode::MeanOverTime)?,
                    prediction_error(p, &sim.trajectory, PredictionMode::MaxOverTime)?,
                ),
                None => (f64::NAN, f64::NAN),
            };
            Ok(EvalRun {
                welfare: sim.welfare(),
                error_mean,
                error_max,
            })
        })
        .collect()
}

fn mean_welfare(runs: &[EvalRun]) -> f64 {
    runs.iter().map(|r| r.welfare).sum::<f64>() / runs.len() as f64
}

/// Runs `f` over `tasks` in parallel, keeping task order. Failures are
/// reported as `label: error` instead of aborting the sweep.
fn run_tasks<T, R, L, F>(tasks: &[T], label: L, f: F) -> (Vec<Option<R>>, Vec<String>)
where
    T: Sync,
    R: Send,
    L: Fn(&T) -> String + Sync,
    F: Fn(&T) -> Result<R> + Sync,
{
    let results: Vec<std::result::Result<R, String>> = tasks
        .par_iter()
        .map(|t| f(t).map_err(|e| format!("{}: {e:#}", label(t))))
        .collect();
    let mut failures = Vec::new();
    let values = results
        .into_iter()
        .map(|r| r.map_err(|e| failures.push(e)).ok())
        .collect();
    (values, failures)
}

/// Mean and sample standard deviation; a single value has no spread, so its
/// std is NaN (written as an empty-looking `NaN` cell).
fn stats(values: &[f64]) -> (f64, f64) {
    match values {
        [] => (f64::NAN, f64::NAN),
        [x] => (*x, f64::NAN),
        _ => welfare_stats(values).unwrap_or((f64::NAN, f64::NAN)),
    }
}

// ---------------------------------------------------------------------------
// Resource game: batch-size sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareRow {
    #[serde(rename = "B")]
    pub batch: usize,
    pub method: Method,
    pub seed: u64,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareSummaryRow {
    #[serde(rename = "B")]
    pub batch: usize,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BSweep {
    pub rows: Vec<WelfareRow>,
    pub summary: Vec<WelfareSummaryRow>,
    pub failures: Vec<String>,
}

impl BSweep {
    pub fn summary_for(&self, batch: usize, method: Method) -> Option<&WelfareSummaryRow> {
        self.summary.iter().find(|r| r.batch == batch && r.method == method)
    }
}

fn srsg_at(cfg: &ExperimentConfig, num_agents: usize, batch: usize) -> SrsgConfig {
    cfg.srsg.clone().with_population(num_agents, batch)
}

/// Trains one policy per seed at every batch size and evaluates it next to
/// the myopic baseline on the same evaluation streams.
pub fn run_b_sweep(cfg: &ExperimentConfig) -> Result<BSweep> {
    let train_cfg = cfg.srsg_train_config();
    let n = cfg.srsg.num_agents;
    let tasks: Vec<(usize, usize)> = cfg
        .grid
        .batch_sizes
        .iter()
        .flat_map(|&b| (0..cfg.num_seeds).map(move |i| (b, i)))
        .collect();
    info!("b-sweep: {} tasks at N={n}", tasks.len());
    let (results, failures) = run_tasks(
        &tasks,
        |&(b, i)| format!("B={b} seed={}", cfg.seed_for(i)),
        |&(b, i)| {
            let seed = cfg.seed_for(i);
            let (model, schedule, mu0) = make_srsg(&srsg_at(cfg, n, b))?;
            let (policy, _) = train(
                &model,
                &schedule,
                &mu0,
                &TrainConfig {
                    seed,
                    ..train_cfg.clone()
                },
            )?;
            let pg = evaluate(&policy, &model, &schedule, &mu0, seed, cfg.num_eval_rollouts, None)?;
            let my = evaluate(
                &model.myopic(),
                &model,
                &schedule,
                &mu0,
                seed,
                cfg.num_eval_rollouts,
                None,
            )?;
            Ok([
                WelfareRow {
                    batch: b,
                    method: Method::TmfPg,
                    seed,
                    welfare: mean_welfare(&pg),
                },
                WelfareRow {
                    batch: b,
                    method: Method::Myopic,
                    seed,
                    welfare: mean_welfare(&my),
                },
            ])
        },
    );
    let rows: Vec<WelfareRow> = results.into_iter().flatten().flatten().collect();
    let mut summary = Vec::new();
    for &b in &cfg.grid.batch_sizes {
        for method in [Method::TmfPg, Method::Myopic] {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.batch == b && r.method == method)
                .map(|r| r.welfare)
                .collect();
            if values.is_empty() {
                continue;
            }
            let (mean, std) = stats(&values);
            summary.push(WelfareSummaryRow {
                batch: b,
                method,
                mean,
                std,
                seeds: values.len(),
            });
        }
    }
    Ok(BSweep {
        rows,
        summary,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Resource game: finite-population concentration

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    #[serde(rename = "N")]
    pub num_agents: usize,
    pub seed: u64,
    pub welfare_mean: f64,
    pub welfare_std: f64,
    pub prediction_error_mean: f64,
    pub prediction_error_max: f64,
}

#[derive(Debug, Clone)]
pub struct Concentration {
    pub rows: Vec<ConcentrationRow>,
    /// Per-seed welfare standard deviation across rollouts, averaged over seeds.
    pub welfare_std: ConcentrationSeries,
    /// Time-averaged prediction error, averaged over rollouts and seeds.
    pub prediction_error: ConcentrationSeries,
    pub welfare_std_slope: Option<f64>,
    pub prediction_error_slope: Option<f64>,
    pub failures: Vec<String>,
}

/// Trains one policy per seed at the reference population and returns them
/// in seed order (`None` where training failed).
fn train_srsg_policies(cfg: &ExperimentConfig, batch: usize, failures: &mut Vec<String>) -> Vec<Option<PolicyParams>> {
    let train_cfg = cfg.srsg_train_config();
    let seeds: Vec<usize> = (0..cfg.num_seeds).collect();
    let (policies, mut errs) = run_tasks(
        &seeds,
        |&i| format!("train B={batch} seed={}", cfg.seed_for(i)),
        |&i| {
            let (model, schedule, mu0) = make_srsg(&srsg_at(cfg, cfg.reference_population, batch))?;
            let tc = TrainConfig {
                seed: cfg.seed_for(i),
                ..train_cfg.clone()
            };
            Ok(train(&model, &schedule, &mu0, &tc)?.0)
        },
    );
    failures.append(&mut errs);
    policies
}

/// Evaluates `policy` at population `n` with batch `batch`: returns
/// `(welfare mean, welfare std, mean error, mean max-error)` over rollouts.
fn concentration_point(
    cfg: &ExperimentConfig,
    policy: &PolicyParams,
    n: usize,
    batch: usize,
    seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let (model, schedule, mu0) = make_srsg(&srsg_at(cfg, n, batch))?;
    let planned = roll_forward(&mu0, policy, &schedule, &model)?;
    let runs = evaluate(
        policy,
        &model,
        &schedule,
        &mu0,
        seed,
        cfg.num_eval_rollouts,
        Some(&planned),
    )?;
    let welfare: Vec<f64> = runs.iter().map(|r| r.welfare).collect();
    let (w_mean, w_std) = stats(&welfare);
    let k = runs.len() as f64;
    let e_mean = runs.iter().map(|r| r.error_mean).sum::<f64>() / k;
    let e_max = runs.iter().map(|r| r.error_max).sum::<f64>() / k;
    Ok((w_mean, w_std, e_mean, e_max))
}

pub fn run_concentration(cfg: &ExperimentConfig) -> Result<Concentration> {
    let batch = cfg.srsg.batch_size;
    let mut populations = cfg.grid.populations.clone();
    populations.sort_unstable();
    populations.dedup();
    if let Some(&n) = populations.iter().find(|&&n| n < batch) {
        bail!("population {n} is smaller than the batch size {batch}");
    }
    let mut failures = Vec::new();
    let policies = train_srsg_policies(cfg, batch, &mut failures);
    let tasks: Vec<(usize, usize)> = populations
        .iter()
        .flat_map(|&n| (0..cfg.num_seeds).map(move |i| (n, i)))
        .collect();
    info!("concentration: {} evaluation tasks", tasks.len());
    let (results, mut errs) = run_tasks(
        &tasks,
        |&(n, i)| format!("N={n} seed={}", cfg.seed_for(i)),
        |&(n, i)| {
            let policy = policies[i].as_ref().ok_or_else(|| anyhow!("no trained policy"))?;
            let seed = cfg.seed_for(i);
            let (welfare_mean, welfare_std, prediction_error_mean, prediction_error_max) =
                concentration_point(cfg, policy, n, batch, seed)?;
            Ok(ConcentrationRow {
                num_agents: n,
                seed,
                welfare_mean,
                welfare_std,
                prediction_error_mean,
                prediction_error_max,
            })
        },
    );
    failures.append(&mut errs);
    let rows: Vec<ConcentrationRow> = results.into_iter().flatten().collect();

    let series = |pick: fn(&ConcentrationRow) -> f64| -> Result<ConcentrationSeries> {
        let points = populations
            .iter()
            .filter_map(|&n| {
                let vals: Vec<f64> = rows.iter().filter(|r| r.num_agents == n).map(pick).collect();
                (!vals.is_empty()).then(|| (n, vals.iter().sum::<f64>() / vals.len() as f64))
            })
            .collect();
        Ok(ConcentrationSeries::new(points)?)
    };
    let welfare_std = series(|r| r.welfare_std)?;
    let prediction_error = series(|r| r.prediction_error_mean)?;
    Ok(Concentration {
        welfare_std_slope: fit_decay_slope(&welfare_std).ok(),
        prediction_error_slope: fit_decay_slope(&prediction_error).ok(),
        rows,
        welfare_std,
        prediction_error,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Resource game: prediction error over N x B

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    #[serde(rename = "N")]
    pub num_agents: usize,
    #[serde(rename = "B")]
    pub batch: usize,
    pub seed: u64,
    pub error_mean: f64,
    pub error_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    #[serde(rename = "N")]
    pub num_agents: usize,
    #[serde(rename = "B")]
    pub batch: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_max_error: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PredictionGrid {
    pub rows: Vec<GridRow>,
    pub cells: Vec<GridCell>,
    /// `(N, B)` pairs left out because `B > N`.
    pub skipped: Vec<(usize, usize)>,
    pub failures: Vec<String>,
}

impl PredictionGrid {
    pub fn cell(&self, num_agents: usize, batch: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.num_agents == num_agents && c.batch == batch)
    }
}

/// For each batch size, trains one policy per seed at the reference
/// population and measures its prediction error at every population size.
pub fn run_prediction_grid(cfg: &ExperimentConfig) -> Result<PredictionGrid> {
    let mut failures = Vec::new();
    let mut policies = Vec::new();
    for &b in &cfg.grid.prediction_batches {
        if b > cfg.reference_population {
            failures.push(format!(
                "train B={b}: batch exceeds the reference population {}",
                cfg.reference_population
            ));
            policies.push(vec![None; cfg.num_seeds]);
        } else {
            policies.push(train_srsg_policies(cfg, b, &mut failures));
        }
    }
    let mut skipped = Vec::new();
    let mut tasks = Vec::new();
    for &n in &cfg.grid.prediction_populations {
        for (bi, &b) in cfg.grid.prediction_batches.iter().enumerate() {
            if b > n {
                skipped.push((n, b));
                continue;
            }
            tasks.extend((0..cfg.num_seeds).map(|i| (n, bi, i)));
        }
    }
    info!("prediction-grid: {} evaluation tasks", tasks.len());
    let batches = &cfg.grid.prediction_batches;
    let (results, mut errs) = run_tasks(
        &tasks,
        |&(n, bi, i)| format!("N={n} B={} seed={}", batches[bi], cfg.seed_for(i)),
        |&(n, bi, i)| {
            let policy = policies[bi][i].as_ref().ok_or_else(|| anyhow!("no trained policy"))?;
            let seed = cfg.seed_for(i);
            let (_, _, error_mean, error_max) = concentration_point(cfg, policy, n, batches[bi], seed)?;
            Ok(GridRow {
                num_agents: n,
                batch: batches[bi],
                seed,
                error_mean,
                error_max,
            })
        },
    );
    failures.append(&mut errs);
    let rows: Vec<GridRow> = results.into_iter().flatten().collect();
    let mut cells = Vec::new();
    for &n in &cfg.grid.prediction_populations {
        for &b in batches {
            let sel: Vec<&GridRow> = rows.iter().filter(|r| r.num_agents == n && r.batch == b).collect();
            if sel.is_empty() {
                continue;
            }
            let errors: Vec<f64> = sel.iter().map(|r| r.error_mean).collect();
            let (mean_error, std_error) = stats(&errors);
            cells.push(GridCell {
                num_agents: n,
                batch: b,
                mean_error,
                std_error,
                mean_max_error: sel.iter().map(|r| r.error_max).sum::<f64>() / sel.len() as f64,
                seeds: sel.len(),
            });
        }
    }
    Ok(PredictionGrid {
        rows,
        cells,
        skipped,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Queueing game sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqgSweep {
    Population,
    Kappa,
    Horizon,
}

impl DqgSweep {
    pub const ALL: [DqgSweep; 3] = [Self::Population, Self::Kappa, Self::Horizon];

    /// Column value written in the `parameter` field.
    pub fn parameter(self) -> &'static str {
        match self {
            Self::Population => "N",
            Self::Kappa => "kappa",
            Self::Horizon => "H",
        }
    }

    /// File stem of the sweep's outputs.
    pub fn stem(self) -> &'static str {
        match self {
            Self::Population => "dqg_n_sweep",
            Self::Kappa => "dqg_kappa_sweep",
            Self::Horizon => "dqg_horizon_sweep",
        }
    }

    pub fn values(self, cfg: &ExperimentConfig) -> Vec<f64> {
        match self {
            Self::Population => cfg.grid.dqg_populations.iter().map(|&n| n as f64).collect(),
            Self::Kappa => cfg.grid.kappas.clone(),
            Self::Horizon => cfg.grid.horizons.iter().map(|&h| h as f64).collect(),
        }
    }

    fn configure(self, base: &DqgConfig, value: f64) -> DqgConfig {
        let mut c = base.clone();
        match self {
            Self::Population => c.num_agents = value as usize,
            Self::Kappa => c.kappa = value,
            Self::Horizon => c.horizon = value as usize,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DqgRow {
    pub parameter: &'static str,
    pub value: f64,
    pub method: Method,
    pub seed: u64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DqgSummaryRow {
    pub parameter: &'static str,
    pub value: f64,
    pub tmf_pg_mean: f64,
    pub tmf_pg_std: f64,
    pub myopic_mean: f64,
    pub myopic_std: f64,
    /// `tmf_pg_mean / myopic_mean`.
    pub ratio: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct DqgSweepResult {
    pub sweep: DqgSweep,
    pub rows: Vec<DqgRow>,
    pub summary: Vec<DqgSummaryRow>,
    pub failures: Vec<String>,
}

impl DqgSweepResult {
    pub fn at(&self, value: f64) -> Option<&DqgSummaryRow> {
        self.summary.iter().find(|r| r.value == value)
    }
}

/// Per-agent reward of TMF-PG and of the myopic baseline at each grid value.
pub fn run_dqg_sweep(cfg: &ExperimentConfig, sweep: DqgSweep) -> Result<DqgSweepResult> {
    let train_cfg = cfg.dqg_train_config();
    let values = sweep.values(cfg);
    let tasks: Vec<(f64, usize)> = values
        .iter()
        .flat_map(|&v| (0..cfg.num_seeds).map(move |i| (v, i)))
        .collect();
    info!("{}: {} tasks", sweep.stem(), tasks.len());
    let (results, failures) = run_tasks(
        &tasks,
        |&(v, i)| format!("{}={v} seed={}", sweep.parameter(), cfg.seed_for(i)),
        |&(v, i)| {
            let seed = cfg.seed_for(i);
            let (model, schedule, mu0) = make_dqg(&sweep.configure(&cfg.dqg, v))?;
            let (policy, _) = train(
                &model,
                &schedule,
                &mu0,
                &TrainConfig {
                    seed,
                    ..train_cfg.clone()
                },
            )?;
            let pg = evaluate(&policy, &model, &schedule, &mu0, seed, cfg.num_eval_rollouts, None)?;
            let my = evaluate(
                &model.myopic(),
                &model,
                &schedule,
                &mu0,
                seed,
                cfg.num_eval_rollouts,
                None,
            )?;
            let row = |method, reward| DqgRow {
                parameter: sweep.parameter(),
                value: v,
                method,
                seed,
                reward,
            };
            Ok([
                row(Method::TmfPg, mean_welfare(&pg)),
                row(Method::Myopic, mean_welfare(&my)),
            ])
        },
    );
    let rows: Vec<DqgRow> = results.into_iter().flatten().flatten().collect();
    let summary = values
        .iter()
        .filter_map(|&v| {
            let pick = |m: Method| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.value == v && r.method == m)
                    .map(|r| r.reward)
                    .collect()
            };
            let (pg, my) = (pick(Method::TmfPg), pick(Method::Myopic));
            if pg.is_empty() {
                return None;
            }
            let (tmf_pg_mean, tmf_pg_std) = stats(&pg);
            let (myopic_mean, myopic_std) = stats(&my);
            Some(DqgSummaryRow {
                parameter: sweep.parameter(),
                value: v,
                tmf_pg_mean,
                tmf_pg_std,
                myopic_mean,
                myopic_std,
                ratio: tmf_pg_mean / myopic_mean,
                seeds: pg.len(),
            })
        })
        .collect();
    Ok(DqgSweepResult {
        sweep,
        rows,
        summary,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Equilibrium solver and sufficient conditions

/// A game instance chosen by `cfg.environment`.
struct Game {
    model: Box<dyn MeanFieldModel>,
    myopic: Box<dyn Policy>,
    schedule: ProtocolSchedule,
    mu0: Distribution,
    train: TrainConfig,
}

fn game(cfg: &ExperimentConfig) -> Result<Game> {
    Ok(match cfg.environment {
        Environment::Srsg => {
            let (model, schedule, mu0) = make_srsg(&cfg.srsg)?;
            Game {
                myopic: Box::new(model.myopic()),
                model: Box::new(model),
                schedule,
                mu0,
                train: cfg.srsg_train_config(),
            }
        }
        Environment::Dqg => {
            let (model, schedule, mu0) = make_dqg(&cfg.dqg)?;
            Game {
                myopic: Box::new(model.myopic()),
                model: Box::new(model),
                schedule,
                mu0,
                train: cfg.dqg_train_config(),
            }
        }
    })
}

/// Batch size used in the contraction coefficient: the explicit first batch,
/// or for environment-driven protocols the mean number of active agents along
/// the uniform policy's planned trajectory.
fn effective_batch(g: &Game) -> Result<usize> {
    let n = g.schedule.num_agents;
    if let Some(b) = g.schedule.batch_size(0) {
        return Ok(b);
    }
    let uniform = PolicyParams::zeros(g.model.num_observations(), g.model.num_actions());
    let traj = roll_forward(&g.mu0, &uniform, &g.schedule, g.model.as_ref())?;
    let activity = activity_profile(&g.schedule, &traj)?;
    if activity.is_empty() {
        return Ok(n);
    }
    let mean_active = activity
        .iter()
        .enumerate()
        .map(|(t, act)| traj.at(t).iter().zip(act).map(|(m, p)| m * p).sum::<f64>())
        .sum::<f64>()
        / activity.len() as f64;
    Ok(((mean_active * n as f64).round() as usize).clamp(1, n))
}

/// Estimated regularity constants (under the uniform policy) and the
/// resulting uniqueness and contraction checks.
pub fn run_condition_checks(cfg: &ExperimentConfig) -> Result<ContractionReport> {
    let g = game(cfg)?;
    conditions_for(cfg, &g)
}

fn conditions_for(cfg: &ExperimentConfig, g: &Game) -> Result<ContractionReport> {
    let model = g.model.as_ref();
    let uniform = PolicyParams::zeros(model.num_observations(), model.num_actions());
    let mut rng = rng::stream(cfg.seed, DIAGNOSTIC_STREAM);
    let est = estimate_lipschitz(model, &uniform, cfg.lipschitz_pairs, &mut rng)?;
    let gamma = if model.discount() < 1.0 {
        model.discount()
    } else {
        cfg.analysis_discount
    };
    let report = check_uniqueness_condition(&est.with_eta(cfg.eta), gamma, model.reward_bound())?
        .estimated(true)
        .with_batch(effective_batch(g)?, g.schedule.num_agents)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub environment: Environment,
    pub converged: bool,
    pub iterations: usize,
    pub final_delta: Option<f64>,
    pub monotonicity_violations: usize,
    pub fixed_point_exploitability: Exploitability,
    pub myopic_exploitability: Exploitability,
    /// Myopic exploitability with everyone deciding at once (resource game only).
    pub myopic_full_batch_exploitability: Option<Exploitability>,
    pub tmf_pg_exploitability: Exploitability,
    pub conditions: ContractionReport,
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub summary: SolverSummary,
    pub trace: SolverTrace,
}

/// Condition checks, the fixed-point solve, and the exploitability of the
/// fixed-point, myopic and trained policies.
pub fn run_solver_and_checks(cfg: &ExperimentConfig) -> Result<SolverRun> {
    let g = game(cfg)?;
    let model = g.model.as_ref();
    let conditions = conditions_for(cfg, &g)?;
    if conditions.alpha_below_one == Some(false) {
        info!("contraction coefficient {:?} >= 1; solving anyway", conditions.alpha);
    }
    let trace = solve_equilibrium(model, &g.schedule, &g.mu0, &cfg.solver)?;
    let fixed_point_exploitability = exploitability(&trace.final_policy, model, &g.schedule, &g.mu0)?;
    let myopic_exploitability = exploitability(g.myopic.as_ref(), model, &g.schedule, &g.mu0)?;
    let myopic_full_batch_exploitability = match cfg.environment {
        Environment::Srsg => {
            let n = cfg.srsg.num_agents;
            let (m, s, mu0) = make_srsg(&srsg_at(cfg, n, n))?;
            Some(exploitability(&m.myopic(), &m, &s, &mu0)?)
        }
        Environment::Dqg => None,
    };
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..g.train.clone()
    };
    let (policy, _) = train(model, &g.schedule, &g.mu0, &train_cfg)?;
    let tmf_pg_exploitability = exploitability(&policy, model, &g.schedule, &g.mu0)?;
    Ok(SolverRun {
        summary: SolverSummary {
            environment: cfg.environment,
            converged: trace.converged,
            iterations: trace.iterations.len(),
            final_delta: trace.final_delta(),
            monotonicity_violations: trace.monotonicity_violations,
            fixed_point_exploitability,
            myopic_exploitability,
            myopic_full_batch_exploitability,
            tmf_pg_exploitability,
            conditions,
        },
        trace,
    })
}

// ---------------------------------------------------------------------------
// Single training run

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub environment: Environment,
    pub seed: u64,
    pub tmf_pg_mean: f64,
    pub tmf_pg_std: f64,
    pub myopic_mean: f64,
    pub myopic_std: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: PolicyParams,
    pub history: Vec<HistoryRow>,
    pub summary: TrainSummary,
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainRun> {
    let g = game(cfg)?;
    let model = g.model.as_ref();
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..g.train.clone()
    };
    let (params, history) = train(model, &g.schedule, &g.mu0, &train_cfg)?;
    let welfare = |p: &dyn Policy| -> Result<(f64, f64)> {
        let runs = evaluate(p, model, &g.schedule, &g.mu0, cfg.seed, cfg.num_eval_rollouts, None)?;
        Ok(stats(&runs.iter().map(|r| r.welfare).collect::<Vec<_>>()))
    };
    let (tmf_pg_mean, tmf_pg_std) = welfare(&params)?;
    let (myopic_mean, myopic_std) = welfare(g.myopic.as_ref())?;
    Ok(TrainRun {
        params,
        history,
        summary: TrainSummary {
            environment: cfg.environment,
            seed: cfg.seed,
            tmf_pg_mean,
            tmf_pg_std,
            myopic_mean,
            myopic_std,
        },
    })
}
