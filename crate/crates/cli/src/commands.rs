//! Runs one experiment and writes its files. Shared by the binary and tests.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{self, BSweep, Concentration, DqgSweep, DqgSweepResult, PredictionGrid, SolverRun};
use crate::output::OutputDir;

pub const B_SWEEP_HEADER: &[&str] = &["B", "method", "seed", "welfare"];
pub const B_SWEEP_SUMMARY_HEADER: &[&str] = &["B", "method", "mean", "std", "seeds"];
pub const CONCENTRATION_HEADER: &[&str] = &[
    "N",
    "seed",
    "welfare_mean",
    "welfare_std",
    "prediction_error_mean",
    "prediction_error_max",
];
pub const GRID_HEADER: &[&str] = &["N", "B", "seed", "error_mean", "error_max"];
pub const GRID_SUMMARY_HEADER: &[&str] = &["N", "B", "mean_error", "std_error", "mean_max_error", "seeds"];
pub const DQG_HEADER: &[&str] = &["parameter", "value", "method", "seed", "reward"];
pub const DQG_SUMMARY_HEADER: &[&str] = &[
    "parameter",
    "value",
    "tmf_pg_mean",
    "tmf_pg_std",
    "myopic_mean",
    "myopic_std",
    "ratio",
    "seeds",
];
pub const SOLVER_HEADER: &[&str] = &["iteration", "delta", "epsilon", "temperature"];

/// What a command produced: the failed grid points, if any.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
}

/// Runs `id` with `cfg` and writes results under `out`. Grid points that fail
/// are reported in the outcome and in `metadata.json` rather than aborting.
pub fn run(id: ExperimentId, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    cfg.experiment = Some(id);
    cfg.validate()?;
    let start = Instant::now();
    let mut dir = OutputDir::create(out)?;
    let (summary, failures) = match id {
        ExperimentId::SrsgBSweep => {
            let r = experiments::run_b_sweep(&cfg)?;
            (write_b_sweep(&mut dir, &r)?, r.failures)
        }
        ExperimentId::SrsgConcentration => {
            let r = experiments::run_concentration(&cfg)?;
            (write_concentration(&mut dir, &r)?, r.failures)
        }
        ExperimentId::SrsgPredictionGrid => {
            let r = experiments::run_prediction_grid(&cfg)?;
            (write_prediction_grid(&mut dir, &r)?, r.failures)
        }
        ExperimentId::DqgNSweep | ExperimentId::DqgKappaSweep | ExperimentId::DqgHorizonSweep => {
            let sweep = match id {
                ExperimentId::DqgNSweep => DqgSweep::Population,
                ExperimentId::DqgKappaSweep => DqgSweep::Kappa,
                _ => DqgSweep::Horizon,
            };
            let r = experiments::run_dqg_sweep(&cfg, sweep)?;
            (write_dqg_sweep(&mut dir, &r)?, r.failures)
        }
        ExperimentId::SolveEq => {
            let r = experiments::run_solver_and_checks(&cfg)?;
            (write_solver(&mut dir, &r)?, Vec::new())
        }
        ExperimentId::CheckConditions => {
            let report = experiments::run_condition_checks(&cfg)?;
            (serde_json::to_value(&report)?, Vec::new())
        }
        ExperimentId::Train => {
            let r = experiments::run_train(&cfg)?;
            dir.history("history.csv", &r.history)?;
            dir.json("policy.json", &r.params)?;
            (serde_json::to_value(&r.summary)?, Vec::new())
        }
    };
    dir.finish(&cfg, start.elapsed().as_secs_f64(), &summary, &failures)?;
    Ok(Outcome { failures })
}

// Each writer emits an experiment's tables and returns the JSON summary
// stored in the metadata.

pub fn write_b_sweep(dir: &mut OutputDir, r: &BSweep) -> Result<Value> {
    dir.csv("b_sweep.csv", B_SWEEP_HEADER, &r.rows)?;
    dir.csv("b_sweep_summary.csv", B_SWEEP_SUMMARY_HEADER, &r.summary)?;
    Ok(json!({ "summary": r.summary }))
}

pub fn write_concentration(dir: &mut OutputDir, r: &Concentration) -> Result<Value> {
    dir.csv("concentration.csv", CONCENTRATION_HEADER, &r.rows)?;
    dir.series("concentration_welfare_std.csv", &r.welfare_std)?;
    dir.series("concentration_prediction_error.csv", &r.prediction_error)?;
    Ok(json!({
        "welfare_std": r.welfare_std.points(),
        "prediction_error": r.prediction_error.points(),
        "welfare_std_slope": r.welfare_std_slope,
        "prediction_error_slope": r.prediction_error_slope,
    }))
}

pub fn write_prediction_grid(dir: &mut OutputDir, r: &PredictionGrid) -> Result<Value> {
    dir.csv("prediction_grid.csv", GRID_HEADER, &r.rows)?;
    dir.csv("prediction_grid_summary.csv", GRID_SUMMARY_HEADER, &r.cells)?;
    Ok(json!({ "cells": r.cells, "skipped_b_above_n": r.skipped }))
}

pub fn write_dqg_sweep(dir: &mut OutputDir, r: &DqgSweepResult) -> Result<Value> {
    let stem = r.sweep.stem();
    dir.csv(&format!("{stem}.csv"), DQG_HEADER, &r.rows)?;
    dir.csv(&format!("{stem}_summary.csv"), DQG_SUMMARY_HEADER, &r.summary)?;
    Ok(json!({ "summary": r.summary }))
}

pub fn write_solver(dir: &mut OutputDir, r: &SolverRun) -> Result<Value> {
    dir.csv("solver_trace.csv", SOLVER_HEADER, &r.trace.iterations)?;
    dir.trajectory("equilibrium_trajectory.csv", &r.trace.final_trajectory)?;
    dir.json("equilibrium_policy.json", &r.trace.final_policy)?;
    Ok(serde_json::to_value(&r.summary)?)
}
