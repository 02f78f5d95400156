//! Experiment configuration: one TOML file per run, every field optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tmf_core::environments::{DqgConfig, SrsgConfig};
use tmf_core::equilibrium::SolverConfig;
use tmf_core::learning::{BaselineMode, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    SrsgBSweep,
    SrsgConcentration,
    SrsgPredictionGrid,
    DqgNSweep,
    DqgKappaSweep,
    DqgHorizonSweep,
    SolveEq,
    CheckConditions,
    Train,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SrsgBSweep => "srsg-b-sweep",
            Self::SrsgConcentration => "srsg-concentration",
            Self::SrsgPredictionGrid => "srsg-prediction-grid",
            Self::DqgNSweep => "dqg-n-sweep",
            Self::DqgKappaSweep => "dqg-kappa-sweep",
            Self::DqgHorizonSweep => "dqg-horizon-sweep",
            Self::SolveEq => "solve-eq",
            Self::CheckConditions => "check-conditions",
            Self::Train => "train",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    #[default]
    Srsg,
    Dqg,
}

/// Partial training settings layered over a per-environment base.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub baseline: Option<BaselineMode>,
    pub entropy_weight: Option<f64>,
    pub rollouts_per_iteration: Option<usize>,
    pub optimizer: Option<Optimizer>,
}

impl TrainOverrides {
    pub fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.iterations {
            base.iterations = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.baseline {
            base.baseline = v;
        }
        if let Some(v) = self.entropy_weight {
            base.entropy_weight = v;
        }
        if let Some(v) = self.rollouts_per_iteration {
            base.rollouts_per_iteration = v;
        }
        if let Some(v) = self.optimizer {
            base.optimizer = v;
        }
        base
    }
}

/// Adam at a high step size; plain SGD at the library default stays close
/// to an open-loop policy on the resource game.
pub fn srsg_train_base() -> TrainConfig {
    TrainConfig {
        iterations: 3000,
        learning_rate: 0.1,
        optimizer: Optimizer::adam(),
        ..Default::default()
    }
}

pub fn dqg_train_base() -> TrainConfig {
    TrainConfig {
        iterations: 1500,
        learning_rate: 0.1,
        optimizer: Optimizer::adam(),
        rollouts_per_iteration: 2,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Batch sizes for the resource-game batch sweep.
    pub batch_sizes: Vec<usize>,
    /// Population sizes for the concentration study (`B = 1`).
    pub populations: Vec<usize>,
    pub prediction_populations: Vec<usize>,
    pub prediction_batches: Vec<usize>,
    pub dqg_populations: Vec<usize>,
    pub kappas: Vec<f64>,
    pub horizons: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            batch_sizes: vec![1, 2, 5, 10, 25, 50, 100],
            populations: vec![10, 20, 50, 100, 200, 500, 1000, 2000],
            prediction_populations: vec![50, 100, 200, 500, 1000],
            prediction_batches: vec![1, 5, 10, 25],
            dqg_populations: vec![50, 100, 150],
            kappas: vec![0.05, 0.2, 0.5],
            horizons: vec![30, 80, 120],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled from the subcommand when absent.
    pub experiment: Option<ExperimentId>,
    /// Game used by `train`, `solve-eq` and `check-conditions`.
    pub environment: Environment,
    pub srsg: SrsgConfig,
    pub dqg: DqgConfig,
    pub srsg_train: TrainOverrides,
    pub dqg_train: TrainOverrides,
    pub grid: Grids,
    pub num_seeds: usize,
    pub num_eval_rollouts: usize,
    /// Base seed; training seed `i` is `seed + i`.
    pub seed: u64,
    /// Population at which concentration and prediction-grid policies are trained.
    pub reference_population: usize,
    pub solver: SolverConfig,
    pub lipschitz_pairs: usize,
    /// Monotonicity constant used in the uniqueness check (not estimable).
    pub eta: f64,
    /// Discount plugged into the sensitivity bound when the game itself is
    /// undiscounted.
    pub analysis_discount: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            environment: Environment::Srsg,
            srsg: SrsgConfig::default(),
            dqg: DqgConfig::default(),
            srsg_train: TrainOverrides::default(),
            dqg_train: TrainOverrides::default(),
            grid: Grids::default(),
            num_seeds: 40,
            num_eval_rollouts: 100,
            seed: 0,
            reference_population: 100,
            solver: SolverConfig::default(),
            lipschitz_pairs: 2000,
            eta: 0.0,
            analysis_discount: 0.95,
            out: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn srsg_train_config(&self) -> TrainConfig {
        self.srsg_train.apply(srsg_train_base())
    }

    pub fn dqg_train_config(&self) -> TrainConfig {
        self.dqg_train.apply(dqg_train_base())
    }

    /// Training seed of replicate `index`.
    pub fn seed_for(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_seeds == 0 {
            bail!("num_seeds must be >= 1");
        }
        if self.num_eval_rollouts == 0 {
            bail!("num_eval_rollouts must be >= 1");
        }
        if self.reference_population == 0 {
            bail!("reference_population must be >= 1");
        }
        if self.lipschitz_pairs == 0 {
            bail!("lipschitz_pairs must be >= 1");
        }
        if !(0.0..1.0).contains(&self.analysis_discount) {
            bail!("analysis_discount must lie in [0, 1)");
        }
        let g = &self.grid;
        let grids = [
            ("batch_sizes", g.batch_sizes.is_empty()),
            ("populations", g.populations.is_empty()),
            ("prediction_populations", g.prediction_populations.is_empty()),
            ("prediction_batches", g.prediction_batches.is_empty()),
            ("dqg_populations", g.dqg_populations.is_empty()),
            ("kappas", g.kappas.is_empty()),
            ("horizons", g.horizons.is_empty()),
        ];
        if let Some((name, _)) = grids.iter().find(|(_, empty)| *empty) {
            bail!("grid.{name} must not be empty");
        }
        self.srsg.validate()?;
        self.dqg.validate()?;
        self.srsg_train_config().validate()?;
        self.dqg_train_config().validate()?;
        self.solver.validate()?;
        Ok(())
    }
}

/// Parses a comma-separated list such as `1,5,10`.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("bad grid value {s:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_training_sections_keep_the_base() {
        let cfg: ExperimentConfig = toml::from_str("[srsg_train]\niterations = 7\n").unwrap();
        let train = cfg.srsg_train_config();
        assert_eq!(train.iterations, 7);
        assert_eq!(train.optimizer, Optimizer::adam());
        assert_eq!(train.learning_rate, 0.1);
    }

    #[test]
    fn unknown_keys_and_empty_grids_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
        let cfg: ExperimentConfig = toml::from_str("[grid]\nkappas = []\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig = toml::from_str("num_seeds = 0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
            experiment = "dqg-kappa-sweep"
            environment = "dqg"
            num_seeds = 3
            [dqg]
            num_agents = 20
            [dqg_train]
            optimizer = { kind = "sgd" }
            [solver]
            max_iters = 10
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.experiment, Some(ExperimentId::DqgKappaSweep));
        assert_eq!(cfg.dqg.num_agents, 20);
        assert_eq!(cfg.dqg_train_config().optimizer, Optimizer::Sgd);
        assert_eq!(cfg.solver.max_iters, 10);
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list::<usize>("1, 5,10").unwrap(), vec![1, 5, 10]);
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
