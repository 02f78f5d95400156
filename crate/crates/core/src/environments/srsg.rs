//! Sequential resource selection: agents arrive in batches and irrevocably
//! pick one of `M` resources whose value erodes quadratically with crowding.
//!
//! Observation `0` is "waiting", observation `1 + m` is "allocated to `m`".
//! Congestion is settled once the allocation is final: an agent on resource
//! `m` receives `v_m - alpha * mu_T[1 + m]^2` at the end of the horizon. Agents
//! in the same batch do not see each other when choosing.

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::Policy;
use crate::protocol::{Protocol, ProtocolSchedule};

pub const WAITING: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrsgConfig {
    pub num_agents: usize,
    pub batch_size: usize,
    pub values: Vec<f64>,
    pub congestion: f64,
}

impl Default for SrsgConfig {
    fn default() -> Self {
        Self {
            num_agents: 100,
            batch_size: 1,
            values: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            congestion: 1.0,
        }
    }
}

impl SrsgConfig {
    pub fn with_population(mut self, num_agents: usize, batch_size: usize) -> Self {
        self.num_agents = num_agents;
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("need at least one resource".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("resource values must be finite".into()));
        }
        if !(self.congestion >= 0.0 && self.congestion.is_finite()) {
            return Err(Error::InvalidConfig("congestion weight must be >= 0".into()));
        }
        if self.num_agents == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("N and B must be >= 1".into()));
        }
        if self.batch_size > self.num_agents {
            return Err(Error::BatchTooLarge {
                batch: self.batch_size,
                num_agents: self.num_agents,
            });
        }
        Ok(())
    }

    /// `T = ceil(N / B)`.
    pub fn horizon(&self) -> usize {
        self.num_agents.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrsgModel {
    values: Vec<f64>,
    congestion: f64,
}

impl SrsgModel {
    pub fn num_resources(&self) -> usize {
        self.values.len()
    }

    /// `v_m - alpha * mu[1 + m]^2`.
    pub fn resource_reward(&self, resource: usize, mu: &Distribution) -> f64 {
        let share = mu.get(1 + resource);
        self.values[resource] - self.congestion * share * share
    }

    /// Mean settled reward of an allocation profile.
    pub fn welfare(&self, mu: &Distribution) -> f64 {
        (0..self.num_resources())
            .map(|m| mu.get(1 + m) * self.resource_reward(m, mu))
            .sum()
    }

    pub fn myopic(&self) -> SrsgMyopic {
        SrsgMyopic { model: self.clone() }
    }
}

impl MeanFieldModel for SrsgModel {
    fn num_observations(&self) -> usize {
        self.values.len() + 1
    }
    fn num_actions(&self) -> usize {
        self.values.len()
    }
    fn discount(&self) -> f64 {
        1.0
    }
    fn reward_bound(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + self.congestion
    }
    fn reward(&self, _obs: usize, _action: usize, _mu: &Distribution) -> f64 {
        0.0
    }
    fn active_transition(&self, obs: usize, action: usize, _mu: &Distribution) -> Distribution {
        let target = if obs == WAITING { 1 + action } else { obs };
        Distribution::point_mass(self.num_observations(), target)
    }
    fn passive_transition(&self, obs: usize, _mu: &Distribution) -> Distribution {
        Distribution::point_mass(self.num_observations(), obs)
    }
    fn terminal_reward(&self, obs: usize, mu: &Distribution) -> f64 {
        if obs == WAITING {
            0.0
        } else {
            self.resource_reward(obs - 1, mu)
        }
    }
}

/// Builds the model, the arrival schedule (batches of `min(B, remaining)`
/// waiting agents in arrival order) and the all-waiting initial distribution.
pub fn make_srsg(config: &SrsgConfig) -> Result<(SrsgModel, ProtocolSchedule, Distribution)> {
    config.validate()?;
    let horizon = config.horizon();
    let batch_sizes = (0..horizon)
        .map(|t| config.batch_size.min(config.num_agents - t * config.batch_size))
        .collect();
    let schedule = ProtocolSchedule::new(
        config.num_agents,
        horizon,
        Protocol::Arrival {
            pool: WAITING,
            batch_sizes,
        },
    )?;
    let model = SrsgModel {
        values: config.values.clone(),
        congestion: config.congestion,
    };
    let mu0 = Distribution::point_mass(model.num_observations(), WAITING);
    Ok((model, schedule, mu0))
}

/// Picks the resource with the best current reward `v_m - alpha mu[1+m]^2`,
/// ignoring agents yet to arrive. Ties go to the lowest resource id.
#[derive(Debug, Clone, PartialEq)]
pub struct SrsgMyopic {
    model: SrsgModel,
}

impl SrsgMyopic {
    pub fn choose(&self, mu: &Distribution) -> usize {
        let mut best = 0;
        let mut best_value = self.model.resource_reward(0, mu);
        for m in 1..self.model.num_resources() {
            let v = self.model.resource_reward(m, mu);
            if v > best_value {
                best = m;
                best_value = v;
            }
        }
        best
    }
}

impl Policy for SrsgMyopic {
    fn num_actions(&self) -> usize {
        self.model.num_resources()
    }
    fn action_probabilities(&self, _step: usize, obs: usize, mu: &Distribution) -> Result<Distribution> {
        let n = self.model.num_observations();
        if obs >= n {
            return Err(Error::ObservationOutOfRange {
                obs,
                num_observations: n,
            });
        }
        Ok(Distribution::point_mass(self.num_actions(), self.choose(mu)))
    }
}
