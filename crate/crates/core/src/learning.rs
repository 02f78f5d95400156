//! Model-free learning from `N`-agent rollouts: the policy conditions on the
//! empirical distribution, every active agent contributes a score-function
//! term weighted by its advantage.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::dynamics::roll_forward;
use crate::error::{Error, Result};
use crate::metrics::max_trajectory_distance;
use crate::model::MeanFieldModel;
use crate::policy::{Policy, PolicyParams};
use crate::protocol::{Protocol, ProtocolSchedule};
use crate::rng;
use crate::trajectory::{AgentRecord, TrajectoryRecord};

/// One decision taken by an active agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveSample {
    pub step: u32,
    pub agent: u32,
    pub obs: u32,
    pub action: u32,
    /// Discounted return `G_t` from this step on.
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    /// Empirical distributions plus per-agent data.
    pub record: TrajectoryRecord,
    /// `G_t^i` stored step-major, `T * N` entries.
    pub returns: Vec<f64>,
    pub samples: Vec<ActiveSample>,
    /// Advantages aligned with `samples`, once computed.
    pub advantages: Option<Vec<f64>>,
    pub discount: f64,
}

impl RolloutBatch {
    pub fn agents(&self) -> &AgentRecord {
        self.record.agents.as_ref().expect("rollouts always carry agent data")
    }

    pub fn num_agents(&self) -> usize {
        self.agents().num_agents
    }

    pub fn horizon(&self) -> usize {
        self.record.horizon()
    }

    pub fn empirical_mus(&self) -> &[Distribution] {
        &self.record.distributions
    }

    pub fn ret(&self, step: usize, agent: usize) -> f64 {
        self.returns[step * self.num_agents() + agent]
    }

    /// Mean undiscounted total reward per agent.
    pub fn welfare(&self) -> f64 {
        let totals = self.agents().total_rewards();
        totals.iter().sum::<f64>() / totals.len() as f64
    }

    /// Recomputes `G_t^i` (and the sample returns) with discount `gamma`,
    /// dropping any advantages.
    fn recompute_returns(&mut self, gamma: f64) {
        let agents = self.record.agents.as_ref().expect("rollouts always carry agent data");
        let (n, horizon) = (agents.num_agents, self.record.horizon());
        let mut returns = vec![0.0; horizon * n];
        for t in (0..horizon).rev() {
            for i in 0..n {
                let next = if t + 1 == horizon {
                    agents.terminal_rewards[i]
                } else {
                    returns[(t + 1) * n + i]
                };
                returns[t * n + i] = agents.rewards[t * n + i] + gamma * next;
            }
        }
        for s in &mut self.samples {
            s.ret = returns[s.step as usize * n + s.agent as usize];
        }
        self.returns = returns;
        self.discount = gamma;
        self.advantages = None;
    }

    /// Largest violation of `G_t = r_t + gamma G_{t+1}` (with `G_T` the
    /// terminal reward).
    pub fn telescoping_error(&self) -> f64 {
        let agents = self.agents();
        let (n, horizon) = (agents.num_agents, self.horizon());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for t in 0..horizon {
                let next = if t + 1 == horizon {
                    agents.terminal_rewards[i]
                } else {
                    self.ret(t + 1, i)
                };
                let gap = self.ret(t, i) - (agents.reward(t, i) + self.discount * next);
                worst = worst.max(gap.abs());
            }
        }
        worst
    }
}

/// Outcome of an evaluation run: empirical trajectory and per-agent totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trajectory: TrajectoryRecord,
    pub total_rewards: Vec<f64>,
}

impl Simulation {
    pub fn welfare(&self) -> f64 {
        self.total_rewards.iter().sum::<f64>() / self.total_rewards.len() as f64
    }
}

#[inline]
fn draw<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> usize {
    draw_cached(dist, dist.as_point_mass(), rng)
}

/// [`draw`] with the point-mass lookup already done.
#[inline]
fn draw_cached<R: Rng + ?Sized>(dist: &Distribution, point: Option<usize>, rng: &mut R) -> usize {
    match point {
        Some(o) => o,
        None => dist.sample_with(rng.random::<f64>()),
    }
}

fn select_active<R: Rng + ?Sized>(
    schedule: &ProtocolSchedule,
    step: usize,
    obs: &[u32],
    active: &mut [bool],
    rng: &mut R,
) -> Result<()> {
    active.fill(false);
    match &schedule.protocol {
        Protocol::Uniform { batch_sizes } => {
            for i in index::sample(rng, obs.len(), batch_sizes[step]) {
                active[i] = true;
            }
        }
        Protocol::Arrival { pool, batch_sizes } => {
            let batch = batch_sizes[step];
            let mut taken = 0;
            for (i, &o) in obs.iter().enumerate() {
                if taken == batch {
                    break;
                }
                if o as usize == *pool {
                    active[i] = true;
                    taken += 1;
                }
            }
            if taken < batch {
                return Err(Error::InsufficientEligible {
                    step,
                    eligible: taken,
                    batch,
                });
            }
        }
        Protocol::Eligible { eligible } => {
            for (flag, &o) in active.iter_mut().zip(obs) {
                *flag = eligible[o as usize];
            }
        }
    }
    Ok(())
}

/// Validates the schedule and draws `o_0^i` iid from `mu0`.
fn initial_observations<M, R>(
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    rng: &mut R,
) -> Result<Vec<u32>>
where
    M: MeanFieldModel + ?Sized,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    if mu0.len() != model.num_observations() {
        return Err(Error::DimensionMismatch {
            expected: model.num_observations(),
            actual: mu0.len(),
        });
    }
    Ok((0..schedule.num_agents).map(|_| draw(mu0, rng) as u32).collect())
}

struct Recorder {
    observations: Vec<u32>,
    actions: Vec<Option<u32>>,
    rewards: Vec<f64>,
    samples: Vec<ActiveSample>,
}

struct Outcome {
    distributions: Vec<Distribution>,
    final_obs: Vec<u32>,
    totals: Vec<f64>,
    terminal: Vec<f64>,
}

/// Shared `N`-agent simulator. Random numbers are consumed in agent-id order
/// within each step; point-mass kernels consume none.
fn run<M, P, R>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    mut obs: Vec<u32>,
    rng: &mut R,
    mut recorder: Option<&mut Recorder>,
) -> Result<Outcome>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let n = schedule.num_agents;
    let n_obs = model.num_observations();
    let n_act = model.num_actions();
    let mut next_obs = vec![0u32; n];
    let mut active = vec![false; n];
    let mut totals = vec![0.0; n];
    let mut distributions = Vec::with_capacity(schedule.horizon + 1);
    let mut counts = vec![0usize; n_obs];

    let mut probs: Vec<Option<Distribution>> = vec![None; n_obs];
    let mut kernels: Vec<Option<(Distribution, f64)>> = vec![None; n_obs * n_act];
    let mut drifts: Vec<Option<(Distribution, Option<usize>)>> = vec![None; n_obs];
    let mut idle_rewards: Vec<Option<f64>> = vec![None; n_obs * n_obs];

    for t in 0..schedule.horizon {
        counts.fill(0);
        for &o in &obs {
            counts[o as usize] += 1;
        }
        let mu = Distribution::from_counts(&counts)?;
        if let Some(rec) = recorder.as_deref_mut() {
            rec.observations.extend_from_slice(&obs);
        }
        select_active(schedule, t, &obs, &mut active, rng)?;
        probs.fill(None);
        kernels.fill(None);
        drifts.fill(None);
        idle_rewards.fill(None);

        for i in 0..n {
            let o = obs[i] as usize;
            let (next, reward, action) = if active[i] {
                if probs[o].is_none() {
                    probs[o] = Some(policy.action_probabilities(t, o, &mu)?);
                }
                let a = draw(probs[o].as_ref().unwrap(), rng);
                let slot = &mut kernels[o * n_act + a];
                if slot.is_none() {
                    *slot = Some((model.active_transition(o, a, &mu), model.reward(o, a, &mu)));
                }
                let (kernel, r) = slot.as_ref().unwrap();
                (draw(kernel, rng), *r, Some(a as u32))
            } else {
                let (drift, point) = drifts[o].get_or_insert_with(|| {
                    let d = model.passive_transition(o, &mu);
                    let point = d.as_point_mass();
                    (d, point)
                });
                let next = draw_cached(drift, *point, rng);
                let r = *idle_rewards[o * n_obs + next].get_or_insert_with(|| model.passive_reward(o, next, &mu));
                (next, r, None)
            };
            next_obs[i] = next as u32;
            totals[i] += reward;
            if let Some(rec) = recorder.as_deref_mut() {
                rec.actions.push(action);
                rec.rewards.push(reward);
                if let Some(a) = action {
                    rec.samples.push(ActiveSample {
                        step: t as u32,
                        agent: i as u32,
                        obs: o as u32,
                        action: a,
                        ret: 0.0,
                    });
                }
            }
        }
        std::mem::swap(&mut obs, &mut next_obs);
        distributions.push(mu);
    }

    counts.fill(0);
    for &o in &obs {
        counts[o as usize] += 1;
    }
    let mu_final = Distribution::from_counts(&counts)?;
    let mut terminal_by_obs = vec![None; n_obs];
    let terminal: Vec<f64> = obs
        .iter()
        .map(|&o| *terminal_by_obs[o as usize].get_or_insert_with(|| model.terminal_reward(o as usize, &mu_final)))
        .collect();
    for (total, r) in totals.iter_mut().zip(&terminal) {
        *total += r;
    }
    if let Some(rec) = recorder {
        rec.observations.extend_from_slice(&obs);
    }
    distributions.push(mu_final);
    Ok(Outcome {
        distributions,
        final_obs: obs,
        totals,
        terminal,
    })
}

/// Full `N`-agent rollout with per-agent records and returns.
pub fn rollout<M, P, R>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    rng: &mut R,
) -> Result<RolloutBatch>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let initial = initial_observations(model, schedule, mu0, rng)?;
    record_rollout(policy, model, schedule, initial, rng)
}

/// [`rollout`] from given initial observations instead of iid draws.
pub fn rollout_from<M, P, R>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    initial: &[usize],
    rng: &mut R,
) -> Result<RolloutBatch>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    schedule.validate()?;
    if initial.len() != schedule.num_agents {
        return Err(Error::DimensionMismatch {
            expected: schedule.num_agents,
            actual: initial.len(),
        });
    }
    let n_obs = model.num_observations();
    if let Some(&obs) = initial.iter().find(|&&o| o >= n_obs) {
        return Err(Error::ObservationOutOfRange {
            obs,
            num_observations: n_obs,
        });
    }
    let initial = initial.iter().map(|&o| o as u32).collect();
    record_rollout(policy, model, schedule, initial, rng)
}

fn record_rollout<M, P, R>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    initial: Vec<u32>,
    rng: &mut R,
) -> Result<RolloutBatch>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let n = schedule.num_agents;
    let mut rec = Recorder {
        observations: Vec::with_capacity((schedule.horizon + 1) * n),
        actions: Vec::with_capacity(schedule.horizon * n),
        rewards: Vec::with_capacity(schedule.horizon * n),
        samples: Vec::new(),
    };
    let outcome = run(policy, model, schedule, initial, rng, Some(&mut rec))?;
    debug_assert_eq!(outcome.final_obs.len(), n);

    let agents = AgentRecord {
        num_agents: n,
        observations: rec.observations,
        actions: rec.actions,
        rewards: rec.rewards,
        terminal_rewards: outcome.terminal,
    };
    let mut batch = RolloutBatch {
        record: TrajectoryRecord {
            distributions: outcome.distributions,
            agents: Some(agents),
            seed: None,
        },
        returns: Vec::new(),
        samples: rec.samples,
        advantages: None,
        discount: model.discount(),
    };
    batch.recompute_returns(model.discount());
    Ok(batch)
}

/// Lightweight rollout keeping only the empirical trajectory and per-agent
/// totals. Consumes the generator exactly like [`rollout`].
pub fn simulate<M, P, R>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    rng: &mut R,
) -> Result<Simulation>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let initial = initial_observations(model, schedule, mu0, rng)?;
    let outcome = run(policy, model, schedule, initial, rng, None)?;
    Ok(Simulation {
        trajectory: TrajectoryRecord::planned(outcome.distributions),
        total_rewards: outcome.totals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    None,
    /// Mean return of the active agents at the same `(t, o)`; falls back to
    /// the step mean, then the batch mean, when fewer than two samples share
    /// the pair.
    #[default]
    StageMean,
}

/// Fills `advantages` as `G - b`.
pub fn compute_advantages(mut batch: RolloutBatch, mode: BaselineMode) -> RolloutBatch {
    let samples = &batch.samples;
    let advantages = match mode {
        BaselineMode::None => samples.iter().map(|s| s.ret).collect(),
        BaselineMode::StageMean => {
            let n_obs = batch.record.distributions[0].len();
            let horizon = batch.horizon();
            let mut pair = vec![(0.0, 0usize); horizon * n_obs];
            let mut step = vec![(0.0, 0usize); horizon];
            let mut all = (0.0, 0usize);
            for s in samples {
                let (t, o) = (s.step as usize, s.obs as usize);
                pair[t * n_obs + o].0 += s.ret;
                pair[t * n_obs + o].1 += 1;
                step[t].0 += s.ret;
                step[t].1 += 1;
                all.0 += s.ret;
                all.1 += 1;
            }
            samples
                .iter()
                .map(|s| {
                    let (t, o) = (s.step as usize, s.obs as usize);
                    let (sum, count) = pair[t * n_obs + o];
                    let baseline = if count >= 2 {
                        sum / count as f64
                    } else if step[t].1 >= 2 {
                        step[t].0 / step[t].1 as f64
                    } else {
                        all.0 / all.1 as f64
                    };
                    s.ret - baseline
                })
                .collect()
        }
    };
    batch.advantages = Some(advantages);
    batch
}

fn entropy(p: &Distribution) -> f64 {
    -p.iter().filter(|x| *x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Gradient of the per-sample-normalized surrogate together with the mean
/// policy entropy over the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub mean_entropy: f64,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Analytic gradient of
/// `J = (1/S) sum_s [A_s log pi(a_s | o_s, mu_s) + w H(pi(. | o_s, mu_s))]`
/// over the `S` active samples of `batch`.
pub fn policy_gradient(params: &PolicyParams, batches: &[RolloutBatch], entropy_weight: f64) -> Result<Gradient> {
    let n_act = Policy::num_actions(params);
    let mut grad = vec![0.0; params.len()];
    let mut coef = vec![0.0; n_act];
    let mut total = 0usize;
    let mut entropy_sum = 0.0;

    for batch in batches {
        let advantages = batch
            .advantages
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("advantages must be computed before the gradient".into()))?;
        // Samples are ordered by step; group those sharing (t, o).
        let mut start = 0;
        while start < batch.samples.len() {
            let head = batch.samples[start];
            let mut end = start + 1;
            while end < batch.samples.len() && batch.samples[end].step == head.step {
                end += 1;
            }
            let mu = &batch.record.distributions[head.step as usize];
            let mut seen = vec![false; params.num_observations()];
            for s in &batch.samples[start..end] {
                let o = s.obs as usize;
                if seen[o] {
                    continue;
                }
                seen[o] = true;
                let pi = params.probabilities(o, mu)?;
                let h = entropy(&pi);
                coef.fill(0.0);
                let mut count = 0usize;
                for (s2, adv) in batch.samples[start..end].iter().zip(&advantages[start..end]) {
                    if s2.obs as usize != o {
                        continue;
                    }
                    count += 1;
                    coef[s2.action as usize] += adv;
                    for (c, p) in coef.iter_mut().zip(pi.iter()) {
                        *c -= adv * p;
                    }
                }
                if entropy_weight != 0.0 {
                    for (c, p) in coef.iter_mut().zip(pi.iter()) {
                        let log_p = if p > 0.0 { p.ln() } else { 0.0 };
                        *c -= entropy_weight * count as f64 * p * (log_p + h);
                    }
                }
                entropy_sum += h * count as f64;
                total += count;
                for (a, c) in coef.iter().enumerate() {
                    let base = params.index(o, a, 0);
                    grad[base] += c;
                    for (k, m) in mu.iter().enumerate() {
                        grad[base + 1 + k] += c * m;
                    }
                }
            }
            start = end;
        }
    }

    if total > 0 {
        for g in &mut grad {
            *g /= total as f64;
        }
    }
    if let Some(flat) = grad.iter().position(|g| !g.is_finite()) {
        let (obs, action, feature) = params.coordinate(flat);
        return Err(Error::NonFiniteGradient { obs, action, feature });
    }
    Ok(Gradient {
        values: grad,
        mean_entropy: if total > 0 { entropy_sum / total as f64 } else { 0.0 },
    })
}

/// The surrogate whose gradient [`policy_gradient`] returns.
pub fn surrogate_objective(params: &PolicyParams, batches: &[RolloutBatch], entropy_weight: f64) -> Result<f64> {
    let mut total = 0usize;
    let mut sum = 0.0;
    for batch in batches {
        let advantages = batch
            .advantages
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("advantages must be computed first".into()))?;
        for (s, adv) in batch.samples.iter().zip(advantages) {
            let pi = params.probabilities(s.obs as usize, &batch.record.distributions[s.step as usize])?;
            sum += adv * pi.get(s.action as usize).ln() + entropy_weight * entropy(&pi);
            total += 1;
        }
    }
    Ok(if total > 0 { sum / total as f64 } else { 0.0 })
}

/// Plain ascent step `theta + lr * grad` without entropy bonus.
pub fn policy_gradient_step(params: &PolicyParams, batch: &RolloutBatch, learning_rate: f64) -> Result<PolicyParams> {
    let grad = policy_gradient(params, std::slice::from_ref(batch), 0.0)?;
    let mut out = params.clone();
    for (t, g) in out.as_mut_slice().iter_mut().zip(&grad.values) {
        *t += learning_rate * g;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub baseline: BaselineMode,
    pub seed: u64,
    /// Initial entropy-bonus weight, decayed linearly to zero over training.
    pub entropy_weight: f64,
    pub rollouts_per_iteration: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            learning_rate: 0.05,
            baseline: BaselineMode::StageMean,
            seed: 0,
            entropy_weight: 0.01,
            rollouts_per_iteration: 1,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.rollouts_per_iteration == 0 {
            return Err(Error::InvalidConfig("rollouts_per_iteration must be >= 1".into()));
        }
        if self.entropy_weight.is_nan() || self.entropy_weight < 0.0 {
            return Err(Error::InvalidConfig("entropy_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mean_welfare: f64,
    /// `max_t W1` between this and the previous iteration's planned
    /// trajectory; empty for the first iteration.
    pub trajectory_delta: Option<f64>,
    pub entropy: f64,
    pub grad_norm: f64,
}

pub fn write_history_csv<W: Write>(rows: &[HistoryRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["iteration", "mean_welfare", "trajectory_delta", "entropy", "grad_norm"])?;
    }
    w.flush()?;
    Ok(())
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// Policy-gradient training from the uniform policy.
pub fn train<M>(
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    config: &TrainConfig,
) -> Result<(PolicyParams, Vec<HistoryRow>)>
where
    M: MeanFieldModel + ?Sized,
{
    let init = PolicyParams::zeros(model.num_observations(), model.num_actions());
    train_from(init, model, schedule, mu0, config)
}

/// Policy-gradient training from `params`. Iteration `k` draws its rollouts
/// from streams `k * R .. (k + 1) * R` of `config.seed`.
pub fn train_from<M>(
    mut params: PolicyParams,
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    config: &TrainConfig,
) -> Result<(PolicyParams, Vec<HistoryRow>)>
where
    M: MeanFieldModel + ?Sized,
{
    config.validate()?;
    let mut history = Vec::with_capacity(config.iterations);
    let mut previous: Option<TrajectoryRecord> = None;
    let mut adam = AdamState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        step: 0,
    };
    let per_iter = config.rollouts_per_iteration as u64;

    for k in 0..config.iterations {
        let weight = config.entropy_weight * (1.0 - k as f64 / config.iterations as f64);
        let batches = (0..per_iter)
            .map(|r| {
                let mut rng = rng::stream(config.seed, k as u64 * per_iter + r);
                rollout(&params, model, schedule, mu0, &mut rng).map(|b| compute_advantages(b, config.baseline))
            })
            .collect::<Result<Vec<_>>>()?;
        let welfare = batches.iter().map(RolloutBatch::welfare).sum::<f64>() / batches.len() as f64;
        let grad = policy_gradient(&params, &batches, weight)?;

        match config.optimizer {
            Optimizer::Sgd => {
                for (t, g) in params.as_mut_slice().iter_mut().zip(&grad.values) {
                    *t += config.learning_rate * g;
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                adam.step += 1;
                let c1 = 1.0 - beta1.powi(adam.step);
                let c2 = 1.0 - beta2.powi(adam.step);
                for (i, (t, g)) in params.as_mut_slice().iter_mut().zip(&grad.values).enumerate() {
                    adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g;
                    adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * g * g;
                    *t += config.learning_rate * (adam.m[i] / c1) / ((adam.v[i] / c2).sqrt() + epsilon);
                }
            }
        }

        let planned = roll_forward(mu0, &params, schedule, model)?;
        let delta = match &previous {
            Some(p) => Some(max_trajectory_distance(p, &planned)?),
            None => None,
        };
        previous = Some(planned);
        history.push(HistoryRow {
            iteration: k,
            mean_welfare: welfare,
            trajectory_delta: delta,
            entropy: grad.mean_entropy,
            grad_norm: grad.norm(),
        });
    }
    Ok((params, history))
}
