//! The deterministic mean-field forward model and its contraction diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::metrics::wasserstein1;
use crate::model::{random_simplex_point, MeanFieldModel, RegularityConstants};
use crate::policy::Policy;
use crate::protocol::ProtocolSchedule;
use crate::trajectory::TrajectoryRecord;

/// One step of the population recursion with a per-observation activity
/// probability:
///
/// ```text
/// mu'(o) = sum_o' mu(o') [ act(o') sum_a pi(a|o',mu) P(o|o',a,mu) + (1 - act(o')) P0(o|o',mu) ]
/// ```
///
/// Uniform batching (`act = B/N` everywhere) is the classical case. Kernels
/// whose weight is exactly zero are never evaluated.
pub fn advance_step<M, P>(
    mu: &Distribution,
    policy: &P,
    step: usize,
    activity: &[f64],
    model: &M,
) -> Result<Distribution>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    let n_obs = model.num_observations();
    if mu.len() != n_obs {
        return Err(Error::DimensionMismatch {
            expected: n_obs,
            actual: mu.len(),
        });
    }
    if activity.len() != n_obs {
        return Err(Error::DimensionMismatch {
            expected: n_obs,
            actual: activity.len(),
        });
    }
    let mut next = vec![0.0; n_obs];
    for (from, mass) in mu.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let active = activity[from];
        if active > 0.0 {
            let probs = policy.action_probabilities(step, from, mu)?;
            for (a, p_a) in probs.iter().enumerate() {
                if p_a == 0.0 {
                    continue;
                }
                let w = mass * active * p_a;
                for (o, p) in model.active_transition(from, a, mu).iter().enumerate() {
                    next[o] += w * p;
                }
            }
        }
        if active < 1.0 {
            let w = mass * (1.0 - active);
            for (o, p) in model.passive_transition(from, mu).iter().enumerate() {
                next[o] += w * p;
            }
        }
    }
    Distribution::new(next)
}

/// Mean-field update when `batch` of `num_agents` agents, chosen uniformly,
/// act and the rest move passively.
pub fn advance_distribution<M, P>(
    mu: &Distribution,
    policy: &P,
    batch: usize,
    num_agents: usize,
    model: &M,
) -> Result<Distribution>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    if num_agents == 0 {
        return Err(Error::InvalidConfig("population must be non-empty".into()));
    }
    if batch > num_agents {
        return Err(Error::BatchTooLarge { batch, num_agents });
    }
    let fraction = batch as f64 / num_agents as f64;
    advance_step(mu, policy, 0, &vec![fraction; mu.len()], model)
}

/// Planned population trajectory `mu_0 .. mu_T` under `policy`.
pub fn roll_forward<M, P>(
    mu0: &Distribution,
    policy: &P,
    schedule: &ProtocolSchedule,
    model: &M,
) -> Result<TrajectoryRecord>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    let mut distributions = Vec::with_capacity(schedule.horizon + 1);
    distributions.push(mu0.clone());
    for t in 0..schedule.horizon {
        let mu = &distributions[t];
        let activity = schedule.activity(t, mu)?;
        let next = advance_step(mu, policy, t, &activity, model)?;
        distributions.push(next);
    }
    Ok(TrajectoryRecord::planned(distributions))
}

/// Dobrushin coefficient `max_{o1 != o2} 1/2 sum_o' |K(o'|o1) - K(o'|o2)|`
/// of a row-stochastic matrix.
pub fn dobrushin_coefficient(kernel: &[Vec<f64>]) -> Result<f64> {
    for (row, weights) in kernel.iter().enumerate() {
        let valid = weights.iter().all(|w| w.is_finite() && *w >= 0.0)
            && (weights.iter().sum::<f64>() - 1.0).abs() < crate::NORMALIZATION_TOLERANCE
            && weights.len() == kernel[0].len();
        if !valid {
            return Err(Error::NonStochasticRow { row });
        }
    }
    let mut worst: f64 = 0.0;
    for (i, r1) in kernel.iter().enumerate() {
        for r2 in &kernel[i + 1..] {
            let tv = 0.5 * r1.iter().zip(r2).map(|(a, b)| (a - b).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    Ok(worst.min(1.0))
}

/// Active transition matrix `K(o'|o) = sum_a pi(a|o, mu) P(o'|o, a, mu)`.
pub fn active_kernel<M, P>(model: &M, policy: &P, mu: &Distribution) -> Result<Vec<Vec<f64>>>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
{
    let n_obs = model.num_observations();
    (0..n_obs)
        .map(|o| {
            let probs = policy.action_probabilities(0, o, mu)?;
            let mut row = vec![0.0; n_obs];
            for (a, p_a) in probs.iter().enumerate() {
                for (next, p) in model.active_transition(o, a, mu).iter().enumerate() {
                    row[next] += p_a * p;
                }
            }
            Ok(row)
        })
        .collect()
}

/// Passive transition matrix `P0(o'|o, mu)`.
pub fn passive_kernel<M: MeanFieldModel + ?Sized>(model: &M, mu: &Distribution) -> Vec<Vec<f64>> {
    (0..model.num_observations())
        .map(|o| model.passive_transition(o, mu).into_weights())
        .collect()
}

/// Sampled lower bounds on the regularity constants of a model under a fixed
/// policy. The monotonicity constant is not estimable and stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    #[serde(flatten)]
    pub constants: RegularityConstants,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

impl LipschitzEstimate {
    /// The estimated constants with a user-supplied monotonicity constant.
    pub fn with_eta(&self, eta: f64) -> RegularityConstants {
        RegularityConstants { eta, ..self.constants }
    }
}

fn sample_pair<R: Rng + ?Sized>(n: usize, kind: usize, rng: &mut R) -> (Distribution, Distribution) {
    let base = random_simplex_point(n, rng);
    let other = random_simplex_point(n, rng);
    match kind {
        0 => (base, other),
        1 => {
            let eps = 10f64.powf(rng.random_range(-4.0..-1.0));
            let near = base.mix(&other, eps).expect("valid mixture");
            (base, near)
        }
        _ => {
            let vertex = Distribution::point_mass(n, rng.random_range(0..n));
            let lean = 10f64.powf(rng.random_range(-4.0..-0.5));
            let mu = vertex.mix(&base, lean).expect("valid mixture");
            let eps = 10f64.powf(rng.random_range(-4.0..-1.0));
            let nu = mu.mix(&other, eps).expect("valid mixture");
            (mu, nu)
        }
    }
}

/// Max-ratio estimates of `L_r, L_P, L_P0, L_pi` and the largest observed
/// Dobrushin coefficients over `num_pairs` sampled pairs `(mu, mu')`.
///
/// Pairs are a mix of independent simplex draws, local perturbations and
/// perturbations near vertices. The results are lower bounds on the suprema.
/// `L_r` also covers the terminal and expected idle rewards.
pub fn estimate_lipschitz<M, P, R>(model: &M, policy: &P, num_pairs: usize, rng: &mut R) -> Result<LipschitzEstimate>
where
    M: MeanFieldModel + ?Sized,
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    if num_pairs == 0 {
        return Err(Error::InvalidConfig("num_pairs must be >= 1".into()));
    }
    let n_obs = model.num_observations();
    let n_act = model.num_actions();
    let mut c = RegularityConstants::default();
    let (mut used, mut skipped) = (0, 0);

    for i in 0..num_pairs {
        let (mu, nu) = sample_pair(n_obs, i % 3, rng);
        for d in [&mu, &nu] {
            c.rho_p = c.rho_p.max(dobrushin_coefficient(&active_kernel(model, policy, d)?)?);
            c.rho_p0 = c.rho_p0.max(dobrushin_coefficient(&passive_kernel(model, d))?);
        }
        let dist = wasserstein1(&mu, &nu)?;
        if dist == 0.0 {
            skipped += 1;
            continue;
        }
        used += 1;
        for o in 0..n_obs {
            let terminal = (model.terminal_reward(o, &mu) - model.terminal_reward(o, &nu)).abs();
            let idle = (model.expected_passive_reward(o, &mu) - model.expected_passive_reward(o, &nu)).abs();
            c.l_r = c.l_r.max(terminal.max(idle) / dist);
            let p0 = wasserstein1(&model.passive_transition(o, &mu), &model.passive_transition(o, &nu))?;
            c.l_p0 = c.l_p0.max(p0 / dist);
            for a in 0..n_act {
                let dr = (model.reward(o, a, &mu) - model.reward(o, a, &nu)).abs();
                c.l_r = c.l_r.max(dr / dist);
                let dp = wasserstein1(&model.active_transition(o, a, &mu), &model.active_transition(o, a, &nu))?;
                c.l_p = c.l_p.max(dp / dist);
            }
            let pm = policy.action_probabilities(0, o, &mu)?;
            let pn = policy.action_probabilities(0, o, &nu)?;
            let gap = pm.iter().zip(pn.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            c.l_pi = c.l_pi.max(gap / dist);
        }
    }
    if used == 0 {
        return Err(Error::NoUsablePairs);
    }
    Ok(LipschitzEstimate {
        constants: c,
        pairs_used: used,
        pairs_skipped: skipped,
    })
}

/// `alpha = (B/N)(rho_P + L_P) + (1 - B/N)(rho_P0 + L_P0)`.
pub fn alpha_coefficient(batch: usize, num_agents: usize, constants: &RegularityConstants) -> Result<f64> {
    if num_agents == 0 {
        return Err(Error::InvalidConfig("population must be non-empty".into()));
    }
    if batch > num_agents {
        return Err(Error::BatchTooLarge { batch, num_agents });
    }
    let f = batch as f64 / num_agents as f64;
    Ok(f * constants.active_term() + (1.0 - f) * constants.passive_term())
}

/// Smallest admissible batch fraction for `alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinBatch {
    /// The lower bound is non-positive: any `B >= 1` works.
    AnyBatch,
    /// `B / N` must strictly exceed this fraction.
    Fraction(f64),
    /// `alpha >= 1` for every batch size.
    Infeasible,
}

impl MinBatch {
    pub fn status(&self) -> &'static str {
        match self {
            MinBatch::AnyBatch => "any_batch",
            MinBatch::Fraction(_) => "fraction",
            MinBatch::Infeasible => "infeasible",
        }
    }

    pub fn fraction(&self) -> Option<f64> {
        match self {
            MinBatch::Fraction(f) => Some(*f),
            _ => None,
        }
    }
}

pub fn min_batch_fraction(constants: &RegularityConstants) -> Result<MinBatch> {
    let active = constants.active_term();
    let passive = constants.passive_term();
    if !active.is_finite() || !passive.is_finite() {
        return Err(Error::InvalidConfig("constants must be finite".into()));
    }
    if active >= 1.0 && passive >= 1.0 {
        return Ok(MinBatch::Infeasible);
    }
    if passive <= 1.0 {
        return Ok(MinBatch::AnyBatch);
    }
    let numerator = passive - 1.0;
    let denominator = passive - active;
    if denominator <= 0.0 {
        return Ok(MinBatch::Infeasible);
    }
    Ok(MinBatch::Fraction(numerator / denominator))
}

/// Outcome of the existence/uniqueness and finite-population checks, with
/// every input echoed back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub l_v: f64,
    pub uniqueness_rhs: f64,
    pub uniqueness_holds: bool,
    pub alpha: Option<f64>,
    pub alpha_below_one: Option<bool>,
    pub batch_fraction: Option<f64>,
    pub min_batch_status: String,
    pub min_batch_fraction: Option<f64>,
    #[serde(flatten)]
    pub constants: RegularityConstants,
    pub gamma: f64,
    pub r_max: f64,
    /// Set when the Lipschitz/Dobrushin inputs came from sampling (lower bounds,
    /// `rho_P` under the current policy only).
    pub constants_estimated: bool,
}

impl ContractionReport {
    /// Fills `alpha` for a batch of `batch` out of `num_agents`.
    pub fn with_batch(mut self, batch: usize, num_agents: usize) -> Result<Self> {
        let alpha = alpha_coefficient(batch, num_agents, &self.constants)?;
        self.alpha = Some(alpha);
        self.alpha_below_one = Some(alpha < 1.0);
        self.batch_fraction = Some(batch as f64 / num_agents as f64);
        Ok(self)
    }

    pub fn estimated(mut self, estimated: bool) -> Self {
        self.constants_estimated = estimated;
        self
    }
}

/// `L_V = (L_r + gamma L_P R_max / (1 - gamma)) / (1 - gamma)`.
pub fn value_sensitivity(constants: &RegularityConstants, gamma: f64, r_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    Ok((constants.l_r + gamma * constants.l_p * r_max / (1.0 - gamma)) / (1.0 - gamma))
}

/// Evaluates `eta > L_V + R_max L_pi / (1 - gamma)^2`.
pub fn check_uniqueness_condition(
    constants: &RegularityConstants,
    gamma: f64,
    r_max: f64,
) -> Result<ContractionReport> {
    constants.validate()?;
    let l_v = value_sensitivity(constants, gamma, r_max)?;
    let rhs = l_v + r_max * constants.l_pi / (1.0 - gamma).powi(2);
    let min_batch = min_batch_fraction(constants)?;
    Ok(ContractionReport {
        l_v,
        uniqueness_rhs: rhs,
        uniqueness_holds: constants.eta > rhs,
        alpha: None,
        alpha_below_one: None,
        batch_fraction: None,
        min_batch_status: min_batch.status().to_string(),
        min_batch_fraction: min_batch.fraction(),
        constants: *constants,
        gamma,
        r_max,
        constants_estimated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClosureModel, TabularModel};
    use crate::policy::PolicyParams;

    fn two_state_model() -> ClosureModel {
        ClosureModel::new(
            2,
            1,
            0.9,
            1.0,
            |_, _, _| 0.0,
            |_, _, _| Distribution::point_mass(2, 1),
            |o, _| Distribution::point_mass(2, o),
        )
    }

    #[test]
    fn hand_evaluated_half_batch() {
        let model = two_state_model();
        let policy = PolicyParams::zeros(2, 1);
        let out = advance_distribution(&Distribution::point_mass(2, 0), &policy, 1, 2, &model).unwrap();
        assert_eq!(out.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn stay_put_is_identity_at_full_batch() {
        let model = ClosureModel::new(
            3,
            2,
            0.9,
            1.0,
            |_, _, _| 0.0,
            |o, _, _| Distribution::point_mass(3, o),
            |_, _| Distribution::uniform(3),
        );
        let mu = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let out = advance_distribution(&mu, &PolicyParams::zeros(3, 2), 7, 7, &model).unwrap();
        assert_eq!(out, mu);
    }

    #[test]
    fn zero_batch_is_pure_passive_step() {
        let model = ClosureModel::new(
            2,
            1,
            0.9,
            1.0,
            |_, _, _| 0.0,
            |_, _, _| Distribution::point_mass(2, 0),
            |_, _| Distribution::new(vec![0.25, 0.75]).unwrap(),
        );
        let mu = Distribution::new(vec![0.6, 0.4]).unwrap();
        let out = advance_distribution(&mu, &PolicyParams::zeros(2, 1), 0, 5, &model).unwrap();
        assert_eq!(out.weights(), &[0.25, 0.75]);
        assert!(matches!(
            advance_distribution(&mu, &PolicyParams::zeros(2, 1), 6, 5, &model),
            Err(Error::BatchTooLarge { .. })
        ));
    }

    #[test]
    fn empty_horizon_and_stay_put_trajectories() {
        let model = ClosureModel::new(
            2,
            2,
            0.9,
            1.0,
            |_, _, _| 0.0,
            |o, _, _| Distribution::point_mass(2, o),
            |o, _| Distribution::point_mass(2, o),
        );
        let mu0 = Distribution::new(vec![0.3, 0.7]).unwrap();
        let policy = PolicyParams::zeros(2, 2);
        let empty = roll_forward(&mu0, &policy, &ProtocolSchedule::fixed(4, 0, 1).unwrap(), &model).unwrap();
        assert_eq!(empty.distributions, vec![mu0.clone()]);
        let traj = roll_forward(&mu0, &policy, &ProtocolSchedule::fixed(4, 5, 2).unwrap(), &model).unwrap();
        assert_eq!(traj.distributions.len(), 6);
        assert!(traj.distributions.iter().all(|d| *d == mu0));
    }

    #[test]
    fn dobrushin_edge_cases() {
        assert_eq!(dobrushin_coefficient(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), 1.0);
        assert_eq!(dobrushin_coefficient(&vec![vec![0.3, 0.7]; 4]).unwrap(), 0.0);
        let c = dobrushin_coefficient(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        assert!((c - 0.8).abs() < 1e-15);
        assert_eq!(
            dobrushin_coefficient(&[vec![0.9, 0.1], vec![0.5, 0.6]]),
            Err(Error::NonStochasticRow { row: 1 })
        );
    }

    #[test]
    fn alpha_endpoints_and_midpoint() {
        let c = RegularityConstants {
            rho_p: 0.3,
            l_p: 0.1,
            rho_p0: 0.8,
            l_p0: 0.2,
            ..Default::default()
        };
        assert!((alpha_coefficient(10, 10, &c).unwrap() - 0.4).abs() < 1e-15);
        assert!((alpha_coefficient(0, 10, &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((alpha_coefficient(5, 10, &c).unwrap() - 0.7).abs() < 1e-15);
        assert!(alpha_coefficient(11, 10, &c).is_err());
    }

    #[test]
    fn min_batch_cases() {
        let mk = |a: f64, b: f64| RegularityConstants {
            rho_p: a,
            rho_p0: b.min(1.0),
            l_p0: (b - 1.0).max(0.0),
            ..Default::default()
        };
        assert_eq!(
            min_batch_fraction(&RegularityConstants {
                rho_p: 0.5,
                rho_p0: 1.0,
                ..Default::default()
            })
            .unwrap(),
            MinBatch::AnyBatch
        );
        match min_batch_fraction(&mk(0.4, 1.2)).unwrap() {
            MinBatch::Fraction(f) => assert!((f - 0.25).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let both = RegularityConstants {
            rho_p: 1.0,
            l_p: 0.1,
            rho_p0: 1.0,
            l_p0: 0.3,
            ..Default::default()
        };
        assert_eq!(min_batch_fraction(&both).unwrap(), MinBatch::Infeasible);
    }

    #[test]
    fn uniqueness_condition_examples() {
        let trivial = RegularityConstants {
            eta: 0.1,
            ..Default::default()
        };
        let r = check_uniqueness_condition(&trivial, 0.9, 1.0).unwrap();
        assert_eq!(r.l_v, 0.0);
        assert!(r.uniqueness_holds);

        let c = RegularityConstants {
            l_r: 1.0,
            eta: 2.0,
            ..Default::default()
        };
        let r = check_uniqueness_condition(&c, 0.5, 1.0).unwrap();
        assert_eq!(r.l_v, 2.0);
        assert!(!r.uniqueness_holds, "strict inequality");
        let r = check_uniqueness_condition(&RegularityConstants { eta: 2.0 + 1e-9, ..c }, 0.5, 1.0).unwrap();
        assert!(r.uniqueness_holds);

        let r = check_uniqueness_condition(
            &RegularityConstants {
                l_r: 0.1,
                ..Default::default()
            },
            0.5,
            1.0,
        )
        .unwrap();
        assert!(!r.uniqueness_holds);
        assert!(matches!(
            check_uniqueness_condition(&c, 1.0, 1.0),
            Err(Error::InvalidDiscount(_))
        ));
    }

    #[test]
    fn report_serializes_flat() {
        let c = RegularityConstants {
            l_r: 1.0,
            rho_p: 0.5,
            eta: 3.0,
            ..Default::default()
        };
        let r = check_uniqueness_condition(&c, 0.5, 1.0)
            .unwrap()
            .with_batch(1, 4)
            .unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let obj = v.as_object().unwrap();
        for key in [
            "l_v",
            "alpha",
            "uniqueness_holds",
            "l_r",
            "rho_p",
            "eta",
            "gamma",
            "r_max",
            "min_batch_status",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert!(obj.values().all(|v| !v.is_object() && !v.is_array()));
        let (a, b) = (c.active_term(), c.passive_term());
        let alpha = r.alpha.unwrap();
        assert!(a.min(b) <= alpha && alpha <= a.max(b));
    }

    #[test]
    fn mu_independent_model_has_zero_lipschitz_constants() {
        let mut rng = crate::rng::stream(1, 0);
        let model = TabularModel::random(3, 2, 0.9, 0.0, (0.0, 0.0), &mut rng);
        let policy = PolicyParams::zeros(3, 2);
        let est = estimate_lipschitz(&model, &policy, 200, &mut rng).unwrap();
        assert_eq!(est.constants.l_r, 0.0);
        assert_eq!(est.constants.l_p, 0.0);
        assert_eq!(est.constants.l_p0, 0.0);
        assert_eq!(est.constants.l_pi, 0.0);
        assert!(est.constants.rho_p > 0.0 && est.constants.rho_p <= 1.0);
    }

    #[test]
    fn mixing_model_lipschitz_matches_mixing_weight() {
        // P = (1 - l) base + l mu has W1(P, P') = l W1(mu, mu') exactly.
        let mut rng = crate::rng::stream(2, 0);
        let model = TabularModel::random(3, 2, 0.9, 0.0, (0.3, 0.1), &mut rng);
        let est = estimate_lipschitz(&model, &PolicyParams::zeros(3, 2), 100, &mut rng).unwrap();
        assert!((est.constants.l_p - 0.3).abs() < 1e-9);
        assert!((est.constants.l_p0 - 0.1).abs() < 1e-9);
    }
}
