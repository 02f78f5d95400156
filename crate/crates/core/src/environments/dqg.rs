//! Dynamic queueing: free agents pick a server, wait in its queue and collect
//! the server's quality on completing service.
//!
//! Observation `0` is "free", observation `1 + m` is "queued at `m`". Service is
//! processor sharing: each of the `L` agents queued at `m` completes in a step
//! with probability `min(1, rate_m / L)`, multiplied by the cliff factor `kappa`
//! while `L` exceeds the server's capacity.

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::Policy;
use crate::protocol::{Protocol, ProtocolSchedule};

pub const FREE: usize = 0;

/// Population size at which `capacities` are stated; capacities scale
/// linearly with `num_agents`.
pub const REFERENCE_POPULATION: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqgConfig {
    pub num_agents: usize,
    pub qualities: Vec<f64>,
    pub rates: Vec<f64>,
    /// Capacities at [`REFERENCE_POPULATION`] agents.
    pub capacities: Vec<f64>,
    pub kappa: f64,
    pub horizon: usize,
}

impl Default for DqgConfig {
    fn default() -> Self {
        Self {
            num_agents: 50,
            qualities: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            rates: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            capacities: vec![12.0, 10.0, 8.0, 5.0, 3.0],
            kappa: 0.2,
            horizon: 80,
        }
    }
}

impl DqgConfig {
    pub fn with_population(mut self, num_agents: usize) -> Self {
        self.num_agents = num_agents;
        self
    }

    pub fn num_servers(&self) -> usize {
        self.qualities.len()
    }

    /// Capacities at the configured population size.
    pub fn scaled_capacities(&self) -> Vec<f64> {
        let scale = self.num_agents as f64 / REFERENCE_POPULATION as f64;
        self.capacities.iter().map(|c| c * scale).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.qualities.len();
        if m == 0 || self.rates.len() != m || self.capacities.len() != m {
            return Err(Error::InvalidConfig(format!(
                "server table needs equally long, non-empty columns (qualities {}, rates {}, capacities {})",
                m,
                self.rates.len(),
                self.capacities.len()
            )));
        }
        if self.qualities.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidConfig("qualities must be finite".into()));
        }
        if self.rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig("rates must be positive".into()));
        }
        if self.capacities.iter().any(|c| !(*c >= 1.0 && c.is_finite())) {
            return Err(Error::InvalidConfig("capacities must be >= 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidConfig(format!("kappa {} outside (0, 1]", self.kappa)));
        }
        if self.num_agents == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("N and H must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqgModel {
    num_agents: usize,
    qualities: Vec<f64>,
    rates: Vec<f64>,
    capacities: Vec<f64>,
    kappa: f64,
}

/// Queue lengths within this distance of an integer are treated as that
/// integer, so `N * mu` recovers exact agent counts.
const COUNT_SNAP: f64 = 1e-9;

impl DqgModel {
    pub fn num_servers(&self) -> usize {
        self.qualities.len()
    }

    pub fn quality(&self, server: usize) -> f64 {
        self.qualities[server]
    }

    /// Number of agents queued at `server` under `mu`.
    pub fn load(&self, server: usize, mu: &Distribution) -> f64 {
        let load = self.num_agents as f64 * mu.get(1 + server);
        let rounded = load.round();
        if (load - rounded).abs() < COUNT_SNAP {
            rounded
        } else {
            load
        }
    }

    /// Per-step completion probability with `load` agents sharing `server`.
    pub fn completion_probability(&self, server: usize, load: f64) -> f64 {
        if load <= 0.0 {
            return 1.0;
        }
        let base = (self.rates[server] / load).min(1.0);
        if load > self.capacities[server] {
            base * self.kappa
        } else {
            base
        }
    }

    pub fn service_probability(&self, server: usize, mu: &Distribution) -> f64 {
        self.completion_probability(server, self.load(server, mu))
    }

    pub fn myopic(&self) -> DqgMyopic {
        DqgMyopic { model: self.clone() }
    }
}

impl MeanFieldModel for DqgModel {
    fn num_observations(&self) -> usize {
        self.qualities.len() + 1
    }
    fn num_actions(&self) -> usize {
        self.qualities.len()
    }
    fn discount(&self) -> f64 {
        1.0
    }
    fn reward_bound(&self) -> f64 {
        self.qualities.iter().fold(0.0_f64, |m, q| m.max(q.abs()))
    }
    fn reward(&self, _obs: usize, _action: usize, _mu: &Distribution) -> f64 {
        0.0
    }
    fn active_transition(&self, obs: usize, action: usize, mu: &Distribution) -> Distribution {
        if obs == FREE {
            Distribution::point_mass(self.num_observations(), 1 + action)
        } else {
            self.passive_transition(obs, mu)
        }
    }
    fn passive_transition(&self, obs: usize, mu: &Distribution) -> Distribution {
        let n = self.num_observations();
        if obs == FREE {
            return Distribution::point_mass(n, FREE);
        }
        let p = self.service_probability(obs - 1, mu);
        if p >= 1.0 {
            return Distribution::point_mass(n, FREE);
        }
        let mut w = vec![0.0; n];
        w[FREE] = p;
        w[obs] = 1.0 - p;
        Distribution::new(w).expect("two-point service kernel")
    }
    fn passive_reward(&self, obs: usize, next: usize, _mu: &Distribution) -> f64 {
        if obs != FREE && next == FREE {
            self.qualities[obs - 1]
        } else {
            0.0
        }
    }
}

/// Builds the model, the eligibility schedule (free agents act) and the
/// all-free initial distribution.
pub fn make_dqg(config: &DqgConfig) -> Result<(DqgModel, ProtocolSchedule, Distribution)> {
    config.validate()?;
    let model = DqgModel {
        num_agents: config.num_agents,
        qualities: config.qualities.clone(),
        rates: config.rates.clone(),
        capacities: config.scaled_capacities(),
        kappa: config.kappa,
    };
    let mut eligible = vec![false; model.num_observations()];
    eligible[FREE] = true;
    let schedule = ProtocolSchedule::new(config.num_agents, config.horizon, Protocol::Eligible { eligible })?;
    let mu0 = Distribution::point_mass(model.num_observations(), FREE);
    Ok((model, schedule, mu0))
}

/// Picks the server maximizing `quality * completion probability` with the
/// current queue plus the agent itself. Ties go to the lowest server id.
#[derive(Debug, Clone, PartialEq)]
pub struct DqgMyopic {
    model: DqgModel,
}

impl DqgMyopic {
    pub fn choose(&self, mu: &Distribution) -> usize {
        let score =
            |m: usize| self.model.quality(m) * self.model.completion_probability(m, self.model.load(m, mu) + 1.0);
        let mut best = 0;
        let mut best_score = score(0);
        for m in 1..self.model.num_servers() {
            let s = score(m);
            if s > best_score {
                best = m;
                best_score = s;
            }
        }
        best
    }
}

impl Policy for DqgMyopic {
    fn num_actions(&self) -> usize {
        self.model.num_servers()
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

#[cfg(test)]
mod tests {
    use super::*;

    fn counts_to_mu(counts: &[usize]) -> Distribution {
        Distribution::from_counts(counts).unwrap()
    }

    #[test]
    fn single_agent_is_served_at_once() {
        let config = DqgConfig {
            num_agents: 1,
            qualities: vec![2.0],
            rates: vec![1.0],
            capacities: vec![50.0],
            ..Default::default()
        };
        let (model, _, _) = make_dqg(&config).unwrap();
        let mu = counts_to_mu(&[0, 1]);
        assert_eq!(model.passive_transition(1, &mu), Distribution::point_mass(2, FREE));
        assert_eq!(model.expected_passive_reward(1, &mu), 2.0);
    }

    #[test]
    fn cliff_applies_strictly_above_capacity() {
        let (model, _, _) = make_dqg(&DqgConfig::default()).unwrap();
        // Honey-trap server: capacity 3 at N = 50.
        let at_cap = counts_to_mu(&[47, 0, 0, 0, 0, 3]);
        assert_eq!(model.service_probability(4, &at_cap), 1.0);
        let above = counts_to_mu(&[46, 0, 0, 0, 0, 4]);
        assert!((model.service_probability(4, &above) - 0.75 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn honey_trap_with_ten_queued() {
        let (model, _, _) = make_dqg(&DqgConfig::default()).unwrap();
        let mu = counts_to_mu(&[40, 0, 0, 0, 0, 10]);
        assert!((model.service_probability(4, &mu) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn capacities_scale_with_population() {
        let config = DqgConfig::default().with_population(150);
        assert_eq!(config.scaled_capacities(), vec![36.0, 30.0, 24.0, 15.0, 9.0]);
        assert!(make_dqg(&DqgConfig {
            kappa: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(make_dqg(&DqgConfig {
            rates: vec![1.0],
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn myopic_prefers_the_honey_trap_when_idle() {
        let (model, schedule, mu0) = make_dqg(&DqgConfig::default()).unwrap();
        let myopic = model.myopic();
        assert_eq!(myopic.choose(&mu0), 4);
        assert!(schedule.is_environment_driven());
        // With the honey trap saturated the next best expected reward wins.
        let crowded = counts_to_mu(&[40, 0, 0, 0, 0, 10]);
        assert_eq!(myopic.choose(&crowded), 3);
        assert_eq!(myopic.choose(&crowded), myopic.choose(&crowded.clone()));
    }
}
