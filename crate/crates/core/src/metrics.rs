//! Distances, welfare statistics, prediction error and concentration-rate fits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::trajectory::TrajectoryRecord;

/// `l1` distance between two points of the simplex.
pub fn wasserstein1(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            actual: nu.len(),
        });
    }
    Ok(mu.iter().zip(nu.iter()).map(|(a, b)| (a - b).abs()).sum())
}

/// Largest per-step distance between two equally long trajectories.
pub fn max_trajectory_distance(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<f64> {
    if a.distributions.len() != b.distributions.len() {
        return Err(Error::HorizonMismatch {
            expected: a.distributions.len(),
            actual: b.distributions.len(),
        });
    }
    a.distributions
        .iter()
        .zip(&b.distributions)
        .try_fold(0.0_f64, |acc, (x, y)| Ok(acc.max(wasserstein1(x, y)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    MeanOverTime,
    MaxOverTime,
}

/// Per-step `l1` gap between a planned and a realized trajectory, averaged or
/// maximized over the predicted steps `t = 1..T`. The shared starting point is
/// not a prediction and only counts when `T = 0`.
pub fn prediction_error(planned: &TrajectoryRecord, realized: &TrajectoryRecord, mode: PredictionMode) -> Result<f64> {
    if planned.distributions.len() != realized.distributions.len() {
        return Err(Error::HorizonMismatch {
            expected: planned.distributions.len(),
            actual: realized.distributions.len(),
        });
    }
    let skip = usize::from(planned.horizon() > 0);
    let gaps = planned
        .distributions
        .iter()
        .zip(&realized.distributions)
        .skip(skip)
        .map(|(p, r)| wasserstein1(p, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(match mode {
        PredictionMode::MeanOverTime => gaps.iter().sum::<f64>() / gaps.len() as f64,
        PredictionMode::MaxOverTime => gaps.iter().copied().fold(0.0, f64::max),
    })
}

/// Sample mean and `n - 1` standard deviation.
pub fn welfare_stats(runs: &[f64]) -> Result<(f64, f64)> {
    if runs.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: runs.len(),
        });
    }
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / n;
    let var = runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Slope of the `O(1/sqrt(N))` reference line.
pub const REFERENCE_SLOPE: f64 = -0.5;

/// A statistic measured at increasing population sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSeries {
    points: Vec<(usize, f64)>,
}

impl ConcentrationSeries {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig(
                "population sizes must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn value_at(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|(m, _)| *m == n).map(|(_, v)| *v)
    }

    /// Rows with columns `N, value, log_N, log_value`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "value", "log_N", "log_value"])?;
        for &(n, v) in &self.points {
            w.write_record(&[
                n.to_string(),
                v.to_string(),
                (n as f64).ln().to_string(),
                v.ln().to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Least-squares slope of `ln(value)` against `ln(N)`.
pub fn fit_decay_slope(series: &ConcentrationSeries) -> Result<f64> {
    let pts = series.points();
    if pts.len() < 3 {
        return Err(Error::TooFewValues {
            needed: 3,
            got: pts.len(),
        });
    }
    if let Some(&(_, v)) = pts.iter().find(|(_, v)| v.is_nan() || *v <= 0.0) {
        return Err(Error::NonPositiveStatistic(v));
    }
    let xs: Vec<f64> = pts.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
