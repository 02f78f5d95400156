use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;

/// Per-agent data of an `N`-agent rollout, stored step-major with stride `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub num_agents: usize,
    /// `(T + 1) * N` observations.
    pub observations: Vec<u32>,
    /// `T * N` actions; `None` for idle agents.
    pub actions: Vec<Option<u32>>,
    /// `T * N` rewards (idle agents carry their passive reward, usually 0).
    pub rewards: Vec<f64>,
    /// Terminal reward of each agent at step `T`.
    pub terminal_rewards: Vec<f64>,
}

impl AgentRecord {
    pub fn horizon(&self) -> usize {
        self.actions.len() / self.num_agents
    }

    pub fn observation(&self, step: usize, agent: usize) -> usize {
        self.observations[step * self.num_agents + agent] as usize
    }

    pub fn action(&self, step: usize, agent: usize) -> Option<usize> {
        self.actions[step * self.num_agents + agent].map(|a| a as usize)
    }

    pub fn reward(&self, step: usize, agent: usize) -> f64 {
        self.rewards[step * self.num_agents + agent]
    }

    /// Observation histogram at `step`.
    pub fn counts(&self, step: usize, num_observations: usize) -> Vec<usize> {
        let mut counts = vec![0; num_observations];
        for &o in &self.observations[step * self.num_agents..(step + 1) * self.num_agents] {
            counts[o as usize] += 1;
        }
        counts
    }

    /// Undiscounted total reward of each agent, terminal reward included.
    pub fn total_rewards(&self) -> Vec<f64> {
        let mut totals = self.terminal_rewards.clone();
        for row in self.rewards.chunks(self.num_agents) {
            for (t, r) in totals.iter_mut().zip(row) {
                *t += r;
            }
        }
        totals
    }
}

/// A sequence `mu_0 .. mu_T`, planned or empirical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub distributions: Vec<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<AgentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TrajectoryRecord {
    pub fn planned(distributions: Vec<Distribution>) -> Self {
        Self {
            distributions,
            agents: None,
            seed: None,
        }
    }

    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.distributions.len().saturating_sub(1)
    }

    pub fn at(&self, step: usize) -> &Distribution {
        &self.distributions[step]
    }

    pub fn last(&self) -> &Distribution {
        self.distributions.last().expect("trajectory is never empty")
    }

    /// `(T + 1) x |O|` matrix of weights.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.distributions.iter().map(|d| d.weights().to_vec()).collect()
    }
}
