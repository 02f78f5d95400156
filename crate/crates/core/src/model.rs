//! Game primitives: rewards and active/passive transition kernels, all
//! conditioned on the population distribution.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;

/// Tabular mean-field game primitives over dense observation/action ids.
///
/// The kernels take the current population distribution `mu` explicitly, so a
/// model stays `O(|O| |A|)` in memory while depending continuously on `mu`.
/// Every kernel must return a valid [`Distribution`] of length
/// [`num_observations`](Self::num_observations).
///
/// A discount of exactly 1 is permitted and means undiscounted finite horizon.
pub trait MeanFieldModel: Send + Sync {
    fn num_observations(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn discount(&self) -> f64;
    /// Declared bound on `|r|`, used symbolically by the contraction diagnostics.
    fn reward_bound(&self) -> f64;

    fn reward(&self, obs: usize, action: usize, mu: &Distribution) -> f64;
    fn active_transition(&self, obs: usize, action: usize, mu: &Distribution) -> Distribution;
    fn passive_transition(&self, obs: usize, mu: &Distribution) -> Distribution;

    /// Reward realized by an idle agent moving `obs -> next`. Idle agents earn
    /// nothing unless a model overrides this.
    fn passive_reward(&self, _obs: usize, _next: usize, _mu: &Distribution) -> f64 {
        0.0
    }

    /// Reward paid to every agent at the end of the horizon.
    fn terminal_reward(&self, _obs: usize, _mu: &Distribution) -> f64 {
        0.0
    }

    /// Expected idle reward `sum_o' P0(o'|obs, mu) * passive_reward(obs, o', mu)`.
    fn expected_passive_reward(&self, obs: usize, mu: &Distribution) -> f64 {
        let next = self.passive_transition(obs, mu);
        next.iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .map(|(o, p)| p * self.passive_reward(obs, o, mu))
            .sum()
    }
}

impl<M: MeanFieldModel + ?Sized> MeanFieldModel for &M {
    fn num_observations(&self) -> usize {
        (**self).num_observations()
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn discount(&self) -> f64 {
        (**self).discount()
    }
    fn reward_bound(&self) -> f64 {
        (**self).reward_bound()
    }
    fn reward(&self, obs: usize, action: usize, mu: &Distribution) -> f64 {
        (**self).reward(obs, action, mu)
    }
    fn active_transition(&self, obs: usize, action: usize, mu: &Distribution) -> Distribution {
        (**self).active_transition(obs, action, mu)
    }
    fn passive_transition(&self, obs: usize, mu: &Distribution) -> Distribution {
        (**self).passive_transition(obs, mu)
    }
    fn passive_reward(&self, obs: usize, next: usize, mu: &Distribution) -> f64 {
        (**self).passive_reward(obs, next, mu)
    }
    fn terminal_reward(&self, obs: usize, mu: &Distribution) -> f64 {
        (**self).terminal_reward(obs, mu)
    }
}

/// Lipschitz, Dobrushin and monotonicity constants of a model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub l_r: f64,
    pub l_p: f64,
    pub l_p0: f64,
    pub l_pi: f64,
    pub rho_p: f64,
    pub rho_p0: f64,
    pub eta: f64,
}

impl RegularityConstants {
    /// `rho_P + L_P`, the active-step contraction term.
    pub fn active_term(&self) -> f64 {
        self.rho_p + self.l_p
    }

    /// `rho_P0 + L_P0`, the passive-step contraction term.
    pub fn passive_term(&self) -> f64 {
        self.rho_p0 + self.l_p0
    }

    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.l_r,
            self.l_p,
            self.l_p0,
            self.l_pi,
            self.rho_p,
            self.rho_p0,
            self.eta,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(crate::Error::InvalidConfig(
                "regularity constants must be finite and non-negative".into(),
            ));
        }
        if self.rho_p > 1.0 || self.rho_p0 > 1.0 {
            return Err(crate::Error::InvalidConfig(
                "Dobrushin coefficients must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

type RewardFn = dyn Fn(usize, usize, &Distribution) -> f64 + Send + Sync;
type ActiveFn = dyn Fn(usize, usize, &Distribution) -> Distribution + Send + Sync;
type PassiveFn = dyn Fn(usize, &Distribution) -> Distribution + Send + Sync;
type TerminalFn = dyn Fn(usize, &Distribution) -> f64 + Send + Sync;

/// A model assembled from closures over `(o, a, mu)`.
#[derive(Clone)]
pub struct ClosureModel {
    num_observations: usize,
    num_actions: usize,
    discount: f64,
    reward_bound: f64,
    reward: Arc<RewardFn>,
    active: Arc<ActiveFn>,
    passive: Arc<PassiveFn>,
    terminal: Option<Arc<TerminalFn>>,
}

impl ClosureModel {
    pub fn new(
        num_observations: usize,
        num_actions: usize,
        discount: f64,
        reward_bound: f64,
        reward: impl Fn(usize, usize, &Distribution) -> f64 + Send + Sync + 'static,
        active: impl Fn(usize, usize, &Distribution) -> Distribution + Send + Sync + 'static,
        passive: impl Fn(usize, &Distribution) -> Distribution + Send + Sync + 'static,
    ) -> Self {
        Self {
            num_observations,
            num_actions,
            discount,
            reward_bound,
            reward: Arc::new(reward),
            active: Arc::new(active),
            passive: Arc::new(passive),
            terminal: None,
        }
    }

    pub fn with_terminal_reward(
        mut self,
        terminal: impl Fn(usize, &Distribution) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.terminal = Some(Arc::new(terminal));
        self
    }
}

impl std::fmt::Debug for ClosureModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureModel")
            .field("num_observations", &self.num_observations)
            .field("num_actions", &self.num_actions)
            .field("discount", &self.discount)
            .finish_non_exhaustive()
    }
}

impl MeanFieldModel for ClosureModel {
    fn num_observations(&self) -> usize {
        self.num_observations
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn discount(&self) -> f64 {
        self.discount
    }
    fn reward_bound(&self) -> f64 {
        self.reward_bound
    }
    fn reward(&self, obs: usize, action: usize, mu: &Distribution) -> f64 {
        (self.reward)(obs, action, mu)
    }
    fn active_transition(&self, obs: usize, action: usize, mu: &Distribution) -> Distribution {
        (self.active)(obs, action, mu)
    }
    fn passive_transition(&self, obs: usize, mu: &Distribution) -> Distribution {
        (self.passive)(obs, mu)
    }
    fn terminal_reward(&self, obs: usize, mu: &Distribution) -> f64 {
        self.terminal.as_ref().map_or(0.0, |f| f(obs, mu))
    }
}

/// Finite model whose primitives are affine in `mu`:
///
/// ```text
/// r(o, a, mu)    = base_reward[o][a] + sum_k reward_coupling[o][a][k] * mu[k]
/// P(. | o, a, mu) = (1 - active_mixing)  * active[o][a] + active_mixing  * mu
/// P0(. | o, mu)   = (1 - passive_mixing) * passive[o]   + passive_mixing * mu
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub discount: f64,
    pub base_reward: Vec<Vec<f64>>,
    pub reward_coupling: Vec<Vec<Vec<f64>>>,
    pub active: Vec<Vec<Distribution>>,
    pub passive: Vec<Distribution>,
    pub active_mixing: f64,
    pub passive_mixing: f64,
    pub terminal: Vec<f64>,
}

impl TabularModel {
    /// `mu`-independent model with the given tables.
    pub fn constant(
        discount: f64,
        base_reward: Vec<Vec<f64>>,
        active: Vec<Vec<Distribution>>,
        passive: Vec<Distribution>,
    ) -> Self {
        let num_obs = passive.len();
        let num_actions = base_reward.first().map_or(0, Vec::len);
        Self {
            discount,
            reward_coupling: vec![vec![vec![0.0; num_obs]; num_actions]; num_obs],
            base_reward,
            active,
            passive,
            active_mixing: 0.0,
            passive_mixing: 0.0,
            terminal: vec![0.0; num_obs],
        }
    }

    /// Random model with rewards in `[-1, 1]`, Dirichlet(1) kernels and the
    /// given coupling strengths (`coupling` scales the reward's dependence on `mu`).
    pub fn random<R: Rng + ?Sized>(
        num_obs: usize,
        num_actions: usize,
        discount: f64,
        coupling: f64,
        mixing: (f64, f64),
        rng: &mut R,
    ) -> Self {
        let dist = |rng: &mut R| random_simplex_point(num_obs, rng);
        Self {
            discount,
            base_reward: (0..num_obs)
                .map(|_| (0..num_actions).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            reward_coupling: (0..num_obs)
                .map(|_| {
                    (0..num_actions)
                        .map(|_| (0..num_obs).map(|_| coupling * rng.random_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect(),
            active: (0..num_obs)
                .map(|_| (0..num_actions).map(|_| dist(rng)).collect())
                .collect(),
            passive: (0..num_obs).map(|_| dist(rng)).collect(),
            active_mixing: mixing.0,
            passive_mixing: mixing.1,
            terminal: vec![0.0; num_obs],
        }
    }

    fn mix_with(base: &Distribution, mu: &Distribution, lambda: f64) -> Distribution {
        if lambda == 0.0 {
            base.clone()
        } else {
            base.mix(mu, lambda).expect("mixture of valid distributions")
        }
    }
}

/// Uniform (Dirichlet(1)) draw from the simplex.
pub fn random_simplex_point<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Distribution {
    let raw: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    Distribution::new(raw.into_iter().map(|x| x / total).collect()).expect("normalized exponential draws")
}

impl MeanFieldModel for TabularModel {
    fn num_observations(&self) -> usize {
        self.passive.len()
    }
    fn num_actions(&self) -> usize {
        self.base_reward.first().map_or(0, Vec::len)
    }
    fn discount(&self) -> f64 {
        self.discount
    }
    fn reward_bound(&self) -> f64 {
        let running = self
            .base_reward
            .iter()
            .zip(&self.reward_coupling)
            .flat_map(|(rs, cs)| {
                rs.iter()
                    .zip(cs)
                    .map(|(r, c)| r.abs() + c.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
            })
            .fold(0.0_f64, f64::max);
        let terminal = self.terminal.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        running.max(terminal)
    }
    fn reward(&self, obs: usize, action: usize, mu: &Distribution) -> f64 {
        let coupling: f64 = self.reward_coupling[obs][action]
            .iter()
            .zip(mu.iter())
            .map(|(c, m)| c * m)
            .sum();
        self.base_reward[obs][action] + coupling
    }
    fn active_transition(&self, obs: usize, action: usize, mu: &Distribution) -> Distribution {
        Self::mix_with(&self.active[obs][action], mu, self.active_mixing)
    }
    fn passive_transition(&self, obs: usize, mu: &Distribution) -> Distribution {
        Self::mix_with(&self.passive[obs], mu, self.passive_mixing)
    }
    fn terminal_reward(&self, obs: usize, _mu: &Distribution) -> f64 {
        self.terminal[obs]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_model_kernels_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = TabularModel::random(4, 3, 0.9, 0.5, (0.3, 0.2), &mut rng);
        for _ in 0..50 {
            let mu = random_simplex_point(4, &mut rng);
            for o in 0..4 {
                assert_eq!(model.passive_transition(o, &mu).len(), 4);
                for a in 0..3 {
                    let p = model.active_transition(o, a, &mu);
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(model.reward(o, a, &mu).abs() <= model.reward_bound() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn constants_validation() {
        let mut c = RegularityConstants::default();
        assert!(c.validate().is_ok());
        c.rho_p = 1.5;
        assert!(c.validate().is_err());
        c.rho_p = 0.5;
        c.l_r = -1.0;
        assert!(c.validate().is_err());
    }
}
