use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("negative or non-finite weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("weights sum to {sum}, which is not within 1e-9 of 1")]
    NotNormalized { sum: f64 },

    #[error("distribution is empty")]
    EmptyDistribution,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("observation {obs} out of range (|O| = {num_observations})")]
    ObservationOutOfRange { obs: usize, num_observations: usize },

    #[error("non-finite logit for observation {obs}, action {action}")]
    NonFiniteLogit { obs: usize, action: usize },

    #[error("non-finite gradient at (obs {obs}, action {action}, feature {feature})")]
    NonFiniteGradient { obs: usize, action: usize, feature: usize },

    #[error("batch size {batch} exceeds population {num_agents}")]
    BatchTooLarge { batch: usize, num_agents: usize },

    #[error("step {step}: only {eligible} eligible agents for an explicit batch of {batch}")]
    InsufficientEligible { step: usize, eligible: usize, batch: usize },

    #[error("row {row} of the transition matrix is not a probability distribution")]
    NonStochasticRow { row: usize },

    #[error("discount {0} must lie in [0, 1) here")]
    InvalidDiscount(f64),

    #[error("trajectory has {actual} distributions but the schedule needs {expected}")]
    HorizonMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every sampled pair had zero distance; no Lipschitz ratio could be formed")]
    NoUsablePairs,

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("statistic must be positive for log-log fitting, got {0}")]
    NonPositiveStatistic(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
