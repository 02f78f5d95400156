//! Reference computations that share no code with the library: exhaustive
//! policy enumeration and explicit path enumeration against a frozen
//! population trajectory.

#![allow(dead_code, clippy::needless_range_loop)]

use tmf_core::{MeanFieldModel, TrajectoryRecord};

/// Model primitives evaluated once along a fixed trajectory, with a uniform
/// activity probability `beta` per step.
pub struct Frozen {
    pub n_obs: usize,
    pub n_act: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: Vec<f64>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub active: Vec<Vec<Vec<Vec<f64>>>>,
    pub passive: Vec<Vec<Vec<f64>>>,
    pub passive_reward: Vec<Vec<Vec<f64>>>,
    pub terminal: Vec<f64>,
}

impl Frozen {
    pub fn new<M: MeanFieldModel>(model: &M, trajectory: &TrajectoryRecord, beta: f64) -> Self {
        let n_obs = model.num_observations();
        let n_act = model.num_actions();
        let horizon = trajectory.distributions.len() - 1;
        let mut out = Frozen {
            n_obs,
            n_act,
            horizon,
            gamma: model.discount(),
            beta: vec![beta; horizon],
            reward: Vec::new(),
            active: Vec::new(),
            passive: Vec::new(),
            passive_reward: Vec::new(),
            terminal: (0..n_obs)
                .map(|o| model.terminal_reward(o, &trajectory.distributions[horizon]))
                .collect(),
        };
        for mu in &trajectory.distributions[..horizon] {
            out.reward.push(
                (0..n_obs)
                    .map(|o| (0..n_act).map(|a| model.reward(o, a, mu)).collect())
                    .collect(),
            );
            out.active.push(
                (0..n_obs)
                    .map(|o| {
                        (0..n_act)
                            .map(|a| model.active_transition(o, a, mu).weights().to_vec())
                            .collect()
                    })
                    .collect(),
            );
            out.passive.push(
                (0..n_obs)
                    .map(|o| model.passive_transition(o, mu).weights().to_vec())
                    .collect(),
            );
            out.passive_reward.push(
                (0..n_obs)
                    .map(|o| (0..n_obs).map(|o2| model.passive_reward(o, o2, mu)).collect())
                    .collect(),
            );
        }
        out
    }

    /// `V_0` of a deterministic policy given as `choice[t * n_obs + o]`.
    fn deterministic_value(&self, choice: &[usize]) -> Vec<f64> {
        let mut next = self.terminal.clone();
        for t in (0..self.horizon).rev() {
            let mut cur = vec![0.0; self.n_obs];
            for o in 0..self.n_obs {
                let a = choice[t * self.n_obs + o];
                let mut act = self.reward[t][o][a];
                let mut idle = 0.0;
                for o2 in 0..self.n_obs {
                    act += self.gamma * self.active[t][o][a][o2] * next[o2];
                    idle += self.passive[t][o][o2] * (self.passive_reward[t][o][o2] + self.gamma * next[o2]);
                }
                let b = self.beta[t];
                cur[o] = b * act + (1.0 - b) * idle;
            }
            next = cur;
        }
        next
    }

    /// Best initial value per observation over all `|A|^(T |O|)` deterministic
    /// time-indexed policies.
    pub fn enumerate_best_initial_values(&self) -> Vec<f64> {
        let digits = self.horizon * self.n_obs;
        let total = self.n_act.pow(digits as u32);
        let mut best = vec![f64::NEG_INFINITY; self.n_obs];
        let mut choice = vec![0usize; digits];
        for code in 0..total {
            let mut c = code;
            for d in choice.iter_mut() {
                *d = c % self.n_act;
                c /= self.n_act;
            }
            for (b, v) in best.iter_mut().zip(self.deterministic_value(&choice)) {
                *b = b.max(v);
            }
        }
        best
    }

    /// `V_0(o)` of a stochastic policy `probs[t][o][a]` by walking every
    /// path explicitly and summing probability times discounted return.
    pub fn path_values(&self, probs: &[Vec<Vec<f64>>]) -> Vec<f64> {
        (0..self.n_obs)
            .map(|o| {
                let mut acc = 0.0;
                self.walk(probs, 0, o, 1.0, 0.0, 1.0, &mut acc);
                acc
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(&self, probs: &[Vec<Vec<f64>>], t: usize, o: usize, prob: f64, ret: f64, disc: f64, acc: &mut f64) {
        if prob == 0.0 {
            return;
        }
        if t == self.horizon {
            *acc += prob * (ret + disc * self.terminal[o]);
            return;
        }
        let b = self.beta[t];
        for a in 0..self.n_act {
            let pa = b * probs[t][o][a];
            if pa == 0.0 {
                continue;
            }
            for o2 in 0..self.n_obs {
                let p = pa * self.active[t][o][a][o2];
                let r = ret + disc * self.reward[t][o][a];
                self.walk(probs, t + 1, o2, prob * p, r, disc * self.gamma, acc);
            }
        }
        if b < 1.0 {
            for o2 in 0..self.n_obs {
                let p = (1.0 - b) * self.passive[t][o][o2];
                let r = ret + disc * self.passive_reward[t][o][o2];
                self.walk(probs, t + 1, o2, prob * p, r, disc * self.gamma, acc);
            }
        }
    }
}

/// Central finite difference of `f` along coordinate `i` of `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
