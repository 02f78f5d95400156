//! Shared policies `pi(a | o, mu)`.

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};

/// A shared stochastic policy. `step` lets time-indexed (tabular) policies
/// share the interface with population-conditioned ones.
pub trait Policy: Sync {
    fn num_actions(&self) -> usize;
    fn action_probabilities(&self, step: usize, obs: usize, mu: &Distribution) -> Result<Distribution>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn action_probabilities(&self, step: usize, obs: usize, mu: &Distribution) -> Result<Distribution> {
        (**self).action_probabilities(step, obs, mu)
    }
}

/// Softmax policy whose logits are affine in the population distribution:
/// `logit(o, a) = theta[o, a, 0] + sum_k theta[o, a, 1 + k] * mu[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    num_observations: usize,
    num_actions: usize,
    theta: Vec<f64>,
}

impl PolicyParams {
    /// All-zero parameters, i.e. the uniform policy.
    pub fn zeros(num_observations: usize, num_actions: usize) -> Self {
        Self {
            num_observations,
            num_actions,
            theta: vec![0.0; num_observations * num_actions * (num_observations + 1)],
        }
    }

    pub fn from_vec(num_observations: usize, num_actions: usize, theta: Vec<f64>) -> Result<Self> {
        let expected = num_observations * num_actions * (num_observations + 1);
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: theta.len(),
            });
        }
        Ok(Self {
            num_observations,
            num_actions,
            theta,
        })
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    /// Features per `(o, a)` pair: the constant plus one per observation.
    pub fn num_features(&self) -> usize {
        self.num_observations + 1
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    #[inline]
    pub fn index(&self, obs: usize, action: usize, feature: usize) -> usize {
        (obs * self.num_actions + action) * (self.num_observations + 1) + feature
    }

    /// Inverse of [`index`](Self::index).
    pub fn coordinate(&self, flat: usize) -> (usize, usize, usize) {
        let f = self.num_observations + 1;
        let feature = flat % f;
        let pair = flat / f;
        (pair / self.num_actions, pair % self.num_actions, feature)
    }

    pub fn get(&self, obs: usize, action: usize, feature: usize) -> f64 {
        self.theta[self.index(obs, action, feature)]
    }

    pub fn set(&mut self, obs: usize, action: usize, feature: usize, value: f64) {
        let i = self.index(obs, action, feature);
        self.theta[i] = value;
    }

    fn check_inputs(&self, obs: usize, mu: &Distribution) -> Result<()> {
        if obs >= self.num_observations {
            return Err(Error::ObservationOutOfRange {
                obs,
                num_observations: self.num_observations,
            });
        }
        if mu.len() != self.num_observations {
            return Err(Error::DimensionMismatch {
                expected: self.num_observations,
                actual: mu.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, obs: usize, mu: &Distribution) -> Result<Vec<f64>> {
        self.check_inputs(obs, mu)?;
        let f = self.num_features();
        (0..self.num_actions)
            .map(|a| {
                let row = &self.theta[self.index(obs, a, 0)..self.index(obs, a, 0) + f];
                let logit = row[0] + row[1..].iter().zip(mu.iter()).map(|(t, m)| t * m).sum::<f64>();
                if logit.is_finite() {
                    Ok(logit)
                } else {
                    Err(Error::NonFiniteLogit { obs, action: a })
                }
            })
            .collect()
    }

    /// `pi_theta(. | obs, mu)`.
    pub fn probabilities(&self, obs: usize, mu: &Distribution) -> Result<Distribution> {
        Ok(Distribution::softmax(&self.logits(obs, mu)?))
    }
}

impl Policy for PolicyParams {
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn action_probabilities(&self, _step: usize, obs: usize, mu: &Distribution) -> Result<Distribution> {
        self.probabilities(obs, mu)
    }
}

/// Free-function form of [`PolicyParams::probabilities`].
pub fn policy_probabilities(params: &PolicyParams, obs: usize, mu: &Distribution) -> Result<Distribution> {
    params.probabilities(obs, mu)
}

/// Time-indexed tabular policy `pi_t(a | o)`, ignoring `mu`. Steps past the
/// table reuse the last row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    num_actions: usize,
    table: Vec<Vec<Distribution>>,
}

impl TabularPolicy {
    pub fn new(num_actions: usize, table: Vec<Vec<Distribution>>) -> Result<Self> {
        for row in table.iter().flatten() {
            if row.len() != num_actions {
                return Err(Error::DimensionMismatch {
                    expected: num_actions,
                    actual: row.len(),
                });
            }
        }
        if table.is_empty() {
            return Err(Error::InvalidConfig("tabular policy needs at least one step".into()));
        }
        Ok(Self { num_actions, table })
    }

    /// Deterministic policy from chosen action ids `[t][o]`.
    pub fn deterministic(num_actions: usize, choices: &[Vec<usize>]) -> Result<Self> {
        Self::new(
            num_actions,
            choices
                .iter()
                .map(|row| row.iter().map(|&a| Distribution::point_mass(num_actions, a)).collect())
                .collect(),
        )
    }

    pub fn horizon(&self) -> usize {
        self.table.len()
    }

    pub fn table(&self) -> &[Vec<Distribution>] {
        &self.table
    }

    pub fn probabilities(&self, step: usize, obs: usize) -> &Distribution {
        let row = &self.table[step.min(self.table.len() - 1)];
        &row[obs]
    }

    /// `max_{t, o, a} |pi_t(a|o) - other_t(a|o)|`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.table
            .iter()
            .zip(&other.table)
            .flat_map(|(r1, r2)| r1.iter().zip(r2))
            .flat_map(|(p, q)| p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

impl Policy for TabularPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn action_probabilities(&self, step: usize, obs: usize, _mu: &Distribution) -> Result<Distribution> {
        let row = &self.table[step.min(self.table.len() - 1)];
        row.get(obs).cloned().ok_or(Error::ObservationOutOfRange {
            obs,
            num_observations: row.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_parameters_are_uniform() {
        let p = PolicyParams::zeros(3, 4);
        let mu = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        for o in 0..3 {
            assert_eq!(p.probabilities(o, &mu).unwrap().weights(), &[0.25; 4]);
        }
    }

    #[test]
    fn two_action_softmax() {
        let mut p = PolicyParams::zeros(1, 2);
        p.set(0, 0, 0, 3.0_f64.ln());
        let probs = p.probabilities(0, &Distribution::point_mass(1, 0)).unwrap();
        assert!((probs.get(0) - 0.75).abs() < 1e-15);
        assert!((probs.get(1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance() {
        let mut p = PolicyParams::from_vec(2, 3, (0..18).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let mu = Distribution::new(vec![0.4, 0.6]).unwrap();
        let before = p.probabilities(1, &mu).unwrap();
        for a in 0..3 {
            for f in 0..3 {
                let v = p.get(1, a, f);
                p.set(1, a, f, v + 2.5);
            }
        }
        let after = p.probabilities(1, &mu).unwrap();
        for (x, y) in before.iter().zip(after.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_logit_names_the_pair() {
        let mut p = PolicyParams::zeros(2, 2);
        p.set(1, 1, 0, f64::NAN);
        let mu = Distribution::uniform(2);
        assert_eq!(
            p.probabilities(1, &mu),
            Err(Error::NonFiniteLogit { obs: 1, action: 1 })
        );
        assert!(p.probabilities(0, &mu).is_ok());
        assert!(matches!(
            p.probabilities(2, &mu),
            Err(Error::ObservationOutOfRange { .. })
        ));
    }

    #[test]
    fn coordinate_round_trip() {
        let p = PolicyParams::zeros(3, 2);
        for flat in 0..p.len() {
            let (o, a, f) = p.coordinate(flat);
            assert_eq!(p.index(o, a, f), flat);
        }
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(
            theta in proptest::collection::vec(-20.0..20.0f64, 3 * 4 * 4),
            raw_mu in proptest::collection::vec(0.01..1.0f64, 3),
            obs in 0usize..3,
        ) {
            let p = PolicyParams::from_vec(3, 4, theta).unwrap();
            let total: f64 = raw_mu.iter().sum();
            let mu = Distribution::new(raw_mu.iter().map(|x| x / total).collect()).unwrap();
            let probs = p.probabilities(obs, &mu).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|x| x >= 0.0));
        }

        #[test]
        fn lipschitz_in_mu(
            theta in proptest::collection::vec(-3.0..3.0f64, 3 * 2 * 4),
            a in proptest::collection::vec(0.01..1.0f64, 3),
            b in proptest::collection::vec(0.01..1.0f64, 3),
        ) {
            // |d pi / d logit| <= 1/4 per coordinate pair and |d logit / d mu_k| <= max|theta|,
            // so the sup-norm change is bounded by 2 * max|theta| * W1 / 4 * |A|.
            let p = PolicyParams::from_vec(3, 2, theta.clone()).unwrap();
            let norm = |v: &Vec<f64>| { let s: f64 = v.iter().sum(); Distribution::new(v.iter().map(|x| x / s).collect()).unwrap() };
            let (mu, nu) = (norm(&a), norm(&b));
            let w1: f64 = mu.iter().zip(nu.iter()).map(|(x, y)| (x - y).abs()).sum();
            let bound = theta.iter().fold(0.0_f64, |m, x| m.max(x.abs())) * 2.0 / 4.0 * 2.0;
            for o in 0..3 {
                let (pm, pn) = (p.probabilities(o, &mu).unwrap(), p.probabilities(o, &nu).unwrap());
                let gap = pm.iter().zip(pn.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(gap <= bound * w1 + 1e-12);
            }
        }
    }
}
