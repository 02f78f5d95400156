//! Policy evaluation, best response, the forward-backward operator and its
//! fixed point.
//!
//! An agent's own activity follows the protocol: at step `t` an agent at
//! observation `o` acts with the probability given by
//! [`ProtocolSchedule::activity`] evaluated on the planned `mu_t`, and
//! otherwise drifts under `P0` collecting the model's idle reward. The
//! recursion ends in the model's terminal reward.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::distribution::Distribution;
use crate::dynamics::roll_forward;
use crate::error::{Error, Result};
use crate::metrics::max_trajectory_distance;
use crate::model::MeanFieldModel;
use crate::policy::{Policy, TabularPolicy};
use crate::protocol::ProtocolSchedule;
use crate::trajectory::TrajectoryRecord;

/// `V_t(o)` for `t = 0..=T` and, where computed, `Q_t(o, a)` for `t < T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTable {
    pub values: Vec<Vec<f64>>,
    pub q_values: Option<Vec<Vec<Vec<f64>>>>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, step: usize, obs: usize) -> f64 {
        self.values[step][obs]
    }

    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }
}

/// Per-step activity probabilities `p_t(o)` along `trajectory`.
pub fn activity_profile(schedule: &ProtocolSchedule, trajectory: &TrajectoryRecord) -> Result<Vec<Vec<f64>>> {
    if trajectory.horizon() != schedule.horizon {
        return Err(Error::HorizonMismatch {
            expected: schedule.horizon + 1,
            actual: trajectory.distributions.len(),
        });
    }
    (0..schedule.horizon)
        .map(|t| schedule.activity(t, trajectory.at(t)))
        .collect()
}

/// Shared backward recursion; `choose` maps `(t, o, mu_t, Q_t(o, .))` to the
/// action distribution used at active steps.
fn backward<M, F>(
    trajectory: &TrajectoryRecord,
    model: &M,
    schedule: &ProtocolSchedule,
    mut choose: F,
) -> Result<(Vec<Vec<Distribution>>, ValueTable)>
where
    M: MeanFieldModel + ?Sized,
    F: FnMut(usize, usize, &Distribution, &[f64]) -> Result<Distribution>,
{
    let activity = activity_profile(schedule, trajectory)?;
    let n_obs = model.num_observations();
    let n_act = model.num_actions();
    let gamma = model.discount();
    let horizon = schedule.horizon;

    let mut values = vec![vec![0.0; n_obs]; horizon + 1];
    let mut q_values = vec![vec![vec![0.0; n_act]; n_obs]; horizon];
    let mut table = vec![Vec::with_capacity(n_obs); horizon];
    let mu_t = trajectory.at(horizon);
    for (o, v) in values[horizon].iter_mut().enumerate() {
        *v = model.terminal_reward(o, mu_t);
    }

    for t in (0..horizon).rev() {
        let mu = trajectory.at(t);
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        let current = &mut head[t];
        let lookahead = |dist: &Distribution| -> f64 { dist.iter().zip(next).map(|(p, v)| p * v).sum::<f64>() };
        for o in 0..n_obs {
            let q = &mut q_values[t][o];
            for (a, slot) in q.iter_mut().enumerate() {
                *slot = model.reward(o, a, mu) + gamma * lookahead(&model.active_transition(o, a, mu));
            }
            let probs = choose(t, o, mu, q)?;
            let beta = activity[t][o];
            let mut v = 0.0;
            if beta > 0.0 {
                v += beta * probs.iter().zip(q.iter()).map(|(p, q)| p * q).sum::<f64>();
            }
            if beta < 1.0 {
                let drift = model.passive_transition(o, mu);
                let idle: f64 = drift
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(o2, p)| p * (model.passive_reward(o, o2, mu) + gamma * next[o2]))
                    .sum();
                v += (1.0 - beta) * idle;
            }
            current[o] = v;
            table[t].push(probs);
        }
    }
    Ok((
        table,
        ValueTable {
            values,
            q_values: Some(q_values),
        },
    ))
}

fn into_policy(num_actions: usize, num_obs: usize, table: Vec<Vec<Distribution>>) -> Result<TabularPolicy> {
    if table.is_empty() {
        return TabularPolicy::new(num_actions, vec![vec![Distribution::uniform(num_actions); num_obs]]);
    }
    TabularPolicy::new(num_actions, table)
}

/// `V^pi` against a fixed planned trajectory.
pub fn evaluate_policy<M, P>(
    policy: &P,
    trajectory: &TrajectoryRecord,
    model: &M,
    schedule: &ProtocolSchedule,
) -> Result<ValueTable>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    let (_, values) = backward(trajectory, model, schedule, |t, o, mu, _| {
        policy.action_probabilities(t, o, mu)
    })?;
    Ok(values)
}

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = a;
        }
    }
    best
}

/// Greedy time-indexed best response to `trajectory`, ties to the lowest
/// action id.
pub fn best_response<M>(
    trajectory: &TrajectoryRecord,
    model: &M,
    schedule: &ProtocolSchedule,
) -> Result<(TabularPolicy, ValueTable)>
where
    M: MeanFieldModel + ?Sized,
{
    let n_act = model.num_actions();
    let (table, values) = backward(trajectory, model, schedule, |_, _, _, q| {
        Ok(Distribution::point_mass(n_act, argmax(q)))
    })?;
    Ok((into_policy(n_act, model.num_observations(), table)?, values))
}

/// Backward pass with `pi_t(. | o) = softmax(Q_t(o, .) / temperature)`.
pub fn soft_best_response<M>(
    trajectory: &TrajectoryRecord,
    model: &M,
    schedule: &ProtocolSchedule,
    temperature: f64,
) -> Result<(TabularPolicy, ValueTable)>
where
    M: MeanFieldModel + ?Sized,
{
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let n_act = model.num_actions();
    let (table, values) = backward(trajectory, model, schedule, |_, _, _, q| {
        let scaled: Vec<f64> = q.iter().map(|v| v / temperature).collect();
        Ok(Distribution::softmax(&scaled))
    })?;
    Ok((into_policy(n_act, model.num_observations(), table)?, values))
}

/// One application of the forward-backward operator: softened best response
/// to `trajectory`, then the planned trajectory of that policy from the same
/// initial distribution.
pub fn gamma_step<M>(
    trajectory: &TrajectoryRecord,
    model: &M,
    schedule: &ProtocolSchedule,
    temperature: f64,
) -> Result<(TrajectoryRecord, TabularPolicy)>
where
    M: MeanFieldModel + ?Sized,
{
    let (policy, _) = soft_best_response(trajectory, model, schedule, temperature)?;
    let next = roll_forward(trajectory.at(0), &policy, schedule, model)?;
    Ok((next, policy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Target for the fixed-point residual `max_t W1(Gamma(mu)_t, mu_t)`.
    pub tolerance: f64,
    pub max_iters: usize,
    pub temperature: f64,
    /// Multiplicative temperature decay per iteration.
    pub temperature_decay: f64,
    pub temperature_floor: f64,
    /// Number of past residuals used for Anderson extrapolation; 0 gives
    /// plain (damped) Picard iteration.
    pub anderson_depth: usize,
    /// Mixing weight of the fresh operator output.
    pub mixing: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 200,
            temperature: 0.05,
            temperature_decay: 0.9,
            temperature_floor: 1e-5,
            anderson_depth: 5,
            mixing: 1.0,
        }
    }
}

impl SolverConfig {
    /// Constant temperature, no annealing.
    pub fn fixed_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self.temperature_floor = temperature;
        self.temperature_decay = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.temperature_floor.is_nan() || self.temperature_floor <= 0.0 || self.temperature < self.temperature_floor
        {
            return Err(Error::InvalidConfig("need temperature >= temperature_floor > 0".into()));
        }
        if !(self.temperature_decay > 0.0 && self.temperature_decay <= 1.0) {
            return Err(Error::InvalidConfig("temperature_decay must lie in (0, 1]".into()));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(Error::InvalidConfig("mixing must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverIteration {
    pub iteration: usize,
    /// `max_t W1` between the operator output and its input.
    pub delta: f64,
    /// Sup-norm distance of the softened policy from the exact best response.
    pub epsilon: f64,
    pub temperature: f64,
}

fn as_matrix<S: Serializer>(t: &TrajectoryRecord, s: S) -> std::result::Result<S::Ok, S::Error> {
    t.to_matrix().serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverTrace {
    pub iterations: Vec<SolverIteration>,
    pub converged: bool,
    /// Times the delta grew after first dropping below 0.1.
    pub monotonicity_violations: usize,
    #[serde(serialize_with = "as_matrix")]
    pub final_trajectory: TrajectoryRecord,
    #[serde(skip)]
    pub final_policy: TabularPolicy,
}

impl SolverTrace {
    pub fn final_delta(&self) -> Option<f64> {
        self.iterations.last().map(|i| i.delta)
    }
}

fn flatten(trajectory: &TrajectoryRecord) -> Vec<f64> {
    trajectory.distributions[1..].iter().flat_map(|d| d.iter()).collect()
}

fn unflatten(mu0: &Distribution, flat: &[f64]) -> Result<TrajectoryRecord> {
    let n = mu0.len();
    let mut distributions = vec![mu0.clone()];
    for chunk in flat.chunks(n) {
        let clipped: Vec<f64> = chunk.iter().map(|x| x.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let row = if total > 0.0 {
            clipped.iter().map(|x| x / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        distributions.push(Distribution::new(row)?);
    }
    Ok(TrajectoryRecord::planned(distributions))
}

/// Anderson mixing over the last few iterates.
struct Anderson {
    depth: usize,
    mixing: f64,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize, mixing: f64) -> Self {
        Self {
            depth,
            mixing,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.fs.clear();
    }

    fn next(&mut self, x: Vec<f64>, f: Vec<f64>) -> Vec<f64> {
        self.xs.push(x);
        self.fs.push(f);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let k = self.xs.len() - 1;
        let x = &self.xs[k];
        let f = &self.fs[k];
        let plain: Vec<f64> = x.iter().zip(f).map(|(a, b)| a + self.mixing * b).collect();
        if k == 0 || self.depth == 0 {
            return plain;
        }
        let n = x.len();
        let df = DMatrix::from_fn(n, k, |i, j| self.fs[j + 1][i] - self.fs[j][i]);
        let rhs = DVector::from_column_slice(f);
        let Ok(coef) = df.clone().svd(true, true).solve(&rhs, 1e-12) else {
            return plain;
        };
        if coef.iter().any(|c| !c.is_finite()) {
            return plain;
        }
        let mut out = plain;
        for j in 0..k {
            let c = coef[j];
            for (i, o) in out.iter_mut().enumerate() {
                let dx = self.xs[j + 1][i] - self.xs[j][i];
                *o -= c * (dx + self.mixing * df[(i, j)]);
            }
        }
        out
    }
}

/// Iterates the forward-backward operator from the planned trajectory of the
/// uniform policy until the fixed-point residual is below `tolerance` at the
/// final temperature.
///
/// The temperature is annealed geometrically to its floor; once the residual
/// drops below tolerance early, the temperature jumps to the floor. Iterates
/// are combined by Anderson extrapolation and projected back onto the simplex.
pub fn solve_equilibrium<M>(
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
    config: &SolverConfig,
) -> Result<SolverTrace>
where
    M: MeanFieldModel + ?Sized,
{
    config.validate()?;
    let n_act = model.num_actions();
    let uniform = TabularPolicy::new(
        n_act,
        vec![vec![Distribution::uniform(n_act); model.num_observations()]],
    )?;
    let mut current = roll_forward(mu0, &uniform, schedule, model)?;
    let mut anderson = Anderson::new(config.anderson_depth, config.mixing);
    let mut temperature = config.temperature;
    let mut iterations = Vec::new();
    let mut violations = 0;
    let mut previous_delta = f64::INFINITY;
    let mut armed = false;
    let mut last = None;

    for k in 1..=config.max_iters {
        let (soft, _) = soft_best_response(&current, model, schedule, temperature)?;
        let (exact, _) = best_response(&current, model, schedule)?;
        let output = roll_forward(mu0, &soft, schedule, model)?;
        let delta = max_trajectory_distance(&output, &current)?;
        iterations.push(SolverIteration {
            iteration: k,
            delta,
            epsilon: soft.sup_distance(&exact),
            temperature,
        });
        if armed && delta > previous_delta {
            violations += 1;
            log::debug!("solver delta grew at iteration {k}: {previous_delta:.3e} -> {delta:.3e}");
        }
        armed |= delta < 0.1;

        let at_floor = temperature <= config.temperature_floor;
        if delta <= config.tolerance && at_floor {
            return Ok(SolverTrace {
                iterations,
                converged: true,
                monotonicity_violations: violations,
                final_trajectory: output,
                final_policy: soft,
            });
        }

        let x = flatten(&current);
        let f: Vec<f64> = flatten(&output).iter().zip(&x).map(|(g, x)| g - x).collect();
        if delta > 2.0 * previous_delta {
            anderson.reset();
        }
        let next = anderson.next(x, f);
        current = unflatten(mu0, &next)?;
        previous_delta = delta;

        temperature = if delta <= config.tolerance {
            config.temperature_floor
        } else {
            (temperature * config.temperature_decay).max(config.temperature_floor)
        };
        last = Some((output, soft));
    }

    let (final_trajectory, final_policy) = match last {
        Some(pair) => pair,
        None => (current, uniform),
    };
    Ok(SolverTrace {
        iterations,
        converged: false,
        monotonicity_violations: violations,
        final_trajectory,
        final_policy,
    })
}

/// Mean-field exploitability of a policy: value gain of the exact best
/// response against the policy's own planned trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exploitability {
    /// Largest gap over initial observations carrying `mu_0` mass.
    pub value: f64,
    /// Largest gap over all initial observations.
    pub unweighted_max: f64,
    /// `mu_0`-weighted average gap.
    pub weighted_mean: f64,
    pub gaps: Vec<f64>,
}

pub fn exploitability<M, P>(
    policy: &P,
    model: &M,
    schedule: &ProtocolSchedule,
    mu0: &Distribution,
) -> Result<Exploitability>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    let trajectory = roll_forward(mu0, policy, schedule, model)?;
    let own = evaluate_policy(policy, &trajectory, model, schedule)?;
    let (_, best) = best_response(&trajectory, model, schedule)?;
    let gaps: Vec<f64> = best.initial().iter().zip(own.initial()).map(|(b, v)| b - v).collect();
    let value = gaps
        .iter()
        .zip(mu0.iter())
        .filter(|(_, m)| *m > 0.0)
        .map(|(g, _)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Exploitability {
        value,
        unweighted_max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        weighted_mean: gaps.iter().zip(mu0.iter()).map(|(g, m)| g * m).sum(),
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClosureModel, TabularModel};
    use crate::policy::PolicyParams;

    fn always_active(n: usize, t: usize) -> ProtocolSchedule {
        ProtocolSchedule::fixed(n, t, n).unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_values() {
        let mut rng = crate::rng::stream(0, 0);
        let mut model = TabularModel::random(3, 2, 0.9, 0.0, (0.2, 0.1), &mut rng);
        model.base_reward = vec![vec![0.0; 2]; 3];
        let schedule = ProtocolSchedule::fixed(4, 5, 2).unwrap();
        let policy = PolicyParams::zeros(3, 2);
        let traj = roll_forward(&Distribution::uniform(3), &policy, &schedule, &model).unwrap();
        let v = evaluate_policy(&policy, &traj, &model, &schedule).unwrap();
        assert!(v.values.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn one_step_unit_reward() {
        let model = ClosureModel::new(
            2,
            3,
            0.9,
            1.0,
            |_, _, _| 1.0,
            |o, _, _| Distribution::point_mass(2, o),
            |o, _| Distribution::point_mass(2, o),
        );
        let schedule = always_active(3, 1);
        let policy = PolicyParams::zeros(2, 3);
        let traj = roll_forward(&Distribution::uniform(2), &policy, &schedule, &model).unwrap();
        let v = evaluate_policy(&policy, &traj, &model, &schedule).unwrap();
        assert_eq!(v.initial(), &[1.0, 1.0]);
    }

    #[test]
    fn dominant_action_is_always_chosen() {
        let mut rng = crate::rng::stream(5, 0);
        let mut model = TabularModel::random(3, 3, 0.95, 0.0, (0.0, 0.0), &mut rng);
        for row in &mut model.base_reward {
            row[2] = 5.0;
        }
        let schedule = ProtocolSchedule::fixed(10, 4, 3).unwrap();
        let traj = roll_forward(&Distribution::uniform(3), &PolicyParams::zeros(3, 3), &schedule, &model).unwrap();
        let (policy, _) = best_response(&traj, &model, &schedule).unwrap();
        for row in policy.table() {
            for d in row {
                assert_eq!(d.as_point_mass(), Some(2));
            }
        }
    }

    #[test]
    fn single_action_best_response_matches_evaluation() {
        let mut rng = crate::rng::stream(6, 0);
        let model = TabularModel::random(3, 1, 0.9, 0.5, (0.3, 0.3), &mut rng);
        let schedule = ProtocolSchedule::fixed(5, 6, 2).unwrap();
        let policy = PolicyParams::zeros(3, 1);
        let traj = roll_forward(&Distribution::uniform(3), &policy, &schedule, &model).unwrap();
        let (_, best) = best_response(&traj, &model, &schedule).unwrap();
        let own = evaluate_policy(&policy, &traj, &model, &schedule).unwrap();
        assert_eq!(best.values, own.values);
        let e = exploitability(&policy, &model, &schedule, &Distribution::uniform(3)).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let mut rng = crate::rng::stream(7, 0);
        let model = TabularModel::random(2, 2, 0.9, 0.0, (0.0, 0.0), &mut rng);
        let traj = TrajectoryRecord::planned(vec![Distribution::uniform(2); 3]);
        let schedule = ProtocolSchedule::fixed(2, 4, 1).unwrap();
        assert!(matches!(
            best_response(&traj, &model, &schedule),
            Err(Error::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn mu_independent_model_converges_in_two_iterations() {
        let mut rng = crate::rng::stream(8, 0);
        let model = TabularModel::random(4, 3, 0.9, 0.0, (0.0, 0.0), &mut rng);
        let schedule = ProtocolSchedule::fixed(10, 6, 3).unwrap();
        let config = SolverConfig::default().fixed_temperature(0.05);
        let trace = solve_equilibrium(&model, &schedule, &Distribution::uniform(4), &config).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations.len() <= 2);
    }

    #[test]
    fn stay_put_model_converges_immediately() {
        let model = ClosureModel::new(
            3,
            2,
            0.9,
            1.0,
            |_, a, _| a as f64,
            |o, _, _| Distribution::point_mass(3, o),
            |o, _| Distribution::point_mass(3, o),
        );
        let schedule = ProtocolSchedule::fixed(4, 5, 2).unwrap();
        let mu0 = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let trace = solve_equilibrium(&model, &schedule, &mu0, &SolverConfig::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations.len() <= 2);
        assert!(trace.final_trajectory.distributions.iter().all(|d| *d == mu0));
        let e = exploitability(&trace.final_policy, &model, &schedule, &mu0).unwrap();
        assert!(e.value <= 10.0 * 1e-6, "{e:?}");
    }

    #[test]
    fn trace_serializes_matrix() {
        let model = ClosureModel::new(
            2,
            1,
            0.9,
            1.0,
            |_, _, _| 0.0,
            |o, _, _| Distribution::point_mass(2, o),
            |o, _| Distribution::point_mass(2, o),
        );
        let schedule = ProtocolSchedule::fixed(2, 3, 1).unwrap();
        let trace = solve_equilibrium(&model, &schedule, &Distribution::uniform(2), &SolverConfig::default()).unwrap();
        let json = serde_json::to_value(&trace).unwrap();
        let matrix = json["final_trajectory"].as_array().unwrap();
        assert_eq!(matrix.len(), 4);
        assert_eq!(matrix[0].as_array().unwrap().len(), 2);
        assert!(json["iterations"].as_array().unwrap()[0]["delta"].is_number());
    }
}
