//! Decision protocols: which agents act at each step.

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};

/// How the active set is chosen at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// `batch_sizes[t]` agents drawn uniformly without replacement from all `N`.
    Uniform { batch_sizes: Vec<usize> },
    /// The next `batch_sizes[t]` agents (in arrival order) waiting at
    /// observation `pool` act; everyone else is idle.
    Arrival { pool: usize, batch_sizes: Vec<usize> },
    /// Environment-driven: every agent whose observation is flagged acts.
    Eligible { eligible: Vec<bool> },
}

/// Population size, horizon and decision protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSchedule {
    pub num_agents: usize,
    pub horizon: usize,
    pub protocol: Protocol,
}

impl ProtocolSchedule {
    /// Uniform batching with the same batch size at every step.
    pub fn fixed(num_agents: usize, horizon: usize, batch: usize) -> Result<Self> {
        Self::new(
            num_agents,
            horizon,
            Protocol::Uniform {
                batch_sizes: vec![batch; horizon],
            },
        )
    }

    pub fn new(num_agents: usize, horizon: usize, protocol: Protocol) -> Result<Self> {
        let schedule = Self {
            num_agents,
            horizon,
            protocol,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 {
            return Err(Error::InvalidConfig("population must be non-empty".into()));
        }
        match &self.protocol {
            Protocol::Uniform { batch_sizes } | Protocol::Arrival { batch_sizes, .. } => {
                if batch_sizes.len() != self.horizon {
                    return Err(Error::InvalidConfig(format!(
                        "{} batch sizes for horizon {}",
                        batch_sizes.len(),
                        self.horizon
                    )));
                }
                for &b in batch_sizes {
                    if b == 0 {
                        return Err(Error::InvalidConfig("explicit batch sizes must be >= 1".into()));
                    }
                    if b > self.num_agents {
                        return Err(Error::BatchTooLarge {
                            batch: b,
                            num_agents: self.num_agents,
                        });
                    }
                }
                if let Protocol::Arrival { .. } = self.protocol {
                    let total: usize = batch_sizes.iter().sum();
                    if total > self.num_agents {
                        return Err(Error::InvalidConfig(format!(
                            "arrival batches admit {total} agents but only {} exist",
                            self.num_agents
                        )));
                    }
                }
            }
            Protocol::Eligible { eligible } => {
                if eligible.is_empty() {
                    return Err(Error::InvalidConfig("empty eligibility mask".into()));
                }
            }
        }
        Ok(())
    }

    /// Explicit batch size at `step`, or `None` when environment-driven.
    pub fn batch_size(&self, step: usize) -> Option<usize> {
        match &self.protocol {
            Protocol::Uniform { batch_sizes } | Protocol::Arrival { batch_sizes, .. } => batch_sizes.get(step).copied(),
            Protocol::Eligible { .. } => None,
        }
    }

    pub fn is_environment_driven(&self) -> bool {
        matches!(self.protocol, Protocol::Eligible { .. })
    }

    /// Probability that an agent at each observation is active at `step`,
    /// given the population distribution `mu` at that step.
    ///
    /// Uniform batching gives `B_t / N` everywhere. Arrival order concentrates
    /// the whole batch on the pool, so the pool's fraction is
    /// `B_t / (N * mu[pool])`, capped at one.
    pub fn activity(&self, step: usize, mu: &Distribution) -> Result<Vec<f64>> {
        let n = self.num_agents as f64;
        match &self.protocol {
            Protocol::Uniform { batch_sizes } => {
                let b = *batch_sizes.get(step).ok_or(Error::HorizonMismatch {
                    expected: self.horizon,
                    actual: step,
                })?;
                Ok(vec![b as f64 / n; mu.len()])
            }
            Protocol::Arrival { pool, batch_sizes } => {
                let b = *batch_sizes.get(step).ok_or(Error::HorizonMismatch {
                    expected: self.horizon,
                    actual: step,
                })?;
                if *pool >= mu.len() {
                    return Err(Error::ObservationOutOfRange {
                        obs: *pool,
                        num_observations: mu.len(),
                    });
                }
                let mut fractions = vec![0.0; mu.len()];
                let waiting = mu.get(*pool) * n;
                if waiting > 0.0 {
                    fractions[*pool] = (b as f64 / waiting).min(1.0);
                }
                Ok(fractions)
            }
            Protocol::Eligible { eligible } => {
                if eligible.len() != mu.len() {
                    return Err(Error::DimensionMismatch {
                        expected: eligible.len(),
                        actual: mu.len(),
                    });
                }
                Ok(eligible.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect())
            }
        }
    }
}
