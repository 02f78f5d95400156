use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmf_core::dynamics::{advance_distribution, dobrushin_coefficient, roll_forward};
use tmf_core::learning::rollout_from;
use tmf_core::model::random_simplex_point;
use tmf_core::{Distribution, PolicyParams, ProtocolSchedule, TabularModel};

fn random_params(n_obs: usize, n_act: usize, scale: f64, rng: &mut ChaCha8Rng) -> PolicyParams {
    let len = n_obs * n_act * (n_obs + 1);
    let theta = (0..len).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    PolicyParams::from_vec(n_obs, n_act, theta).unwrap()
}

struct Instance {
    model: TabularModel,
    policy: PolicyParams,
    mu: Distribution,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_obs = rng.random_range(1..=6);
    let n_act = rng.random_range(1..=4);
    let mixing = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let model = TabularModel::random(n_obs, n_act, 0.9, 1.0, mixing, &mut rng);
    let policy = random_params(n_obs, n_act, 3.0, &mut rng);
    let mu = random_simplex_point(n_obs, &mut rng);
    Instance { model, policy, mu }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn advance_stays_on_simplex_and_is_convex_in_batch(seed in any::<u64>(), n in 1usize..40, frac in 0.0f64..=1.0) {
        let Instance { model, policy, mu } = instance(seed);
        let b = ((n as f64) * frac).round() as usize;
        let next = advance_distribution(&mu, &policy, b, n, &model).unwrap();
        prop_assert!((next.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(next.iter().all(|p| p >= 0.0));

        let full = advance_distribution(&mu, &policy, n, n, &model).unwrap();
        let none = advance_distribution(&mu, &policy, 0, n, &model).unwrap();
        let w = b as f64 / n as f64;
        for o in 0..mu.len() {
            let mixed = w * full.get(o) + (1.0 - w) * none.get(o);
            prop_assert!((next.get(o) - mixed).abs() <= 1e-12, "o={} {} vs {}", o, next.get(o), mixed);
        }
    }

    #[test]
    fn full_batch_ignores_the_passive_kernel(seed in any::<u64>(), n in 1usize..40) {
        let Instance { model, policy, mu } = instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut perturbed = model.clone();
        for row in perturbed.passive.iter_mut() {
            *row = random_simplex_point(row.len(), &mut rng);
        }
        perturbed.passive_mixing = rng.random_range(0.0..1.0);
        let a = advance_distribution(&mu, &policy, n, n, &model).unwrap();
        let b = advance_distribution(&mu, &policy, n, n, &perturbed).unwrap();
        prop_assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn planned_trajectories_stay_on_simplex(seed in any::<u64>(), horizon in 0usize..8) {
        let Instance { model, policy, mu } = instance(seed);
        let schedule = ProtocolSchedule::fixed(10, horizon, 3).unwrap();
        let traj = roll_forward(&mu, &policy, &schedule, &model).unwrap();
        prop_assert_eq!(traj.distributions.len(), horizon + 1);
        for d in &traj.distributions {
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn dobrushin_lies_in_unit_interval(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel: Vec<Vec<f64>> = (0..rows)
            .map(|_| random_simplex_point(cols, &mut rng).into_weights())
            .collect();
        let rho = dobrushin_coefficient(&kernel).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&rho));
    }
}

#[test]
fn dobrushin_edge_cases() {
    let identity: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    assert_eq!(dobrushin_coefficient(&identity).unwrap(), 1.0);
    let equal = vec![vec![0.2, 0.3, 0.5]; 3];
    assert_eq!(dobrushin_coefficient(&equal).unwrap(), 0.0);
    assert_eq!(dobrushin_coefficient(&[vec![0.4, 0.6]]).unwrap(), 0.0);
}

#[test]
fn one_step_empirical_mean_matches_the_mean_field_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = TabularModel::random(4, 3, 0.9, 1.0, (0.3, 0.4), &mut rng);
    let policy = random_params(4, 3, 2.0, &mut rng);
    let (n, b) = (20, 7);
    let initial: Vec<usize> = [6, 5, 0, 9]
        .iter()
        .enumerate()
        .flat_map(|(o, &c)| std::iter::repeat_n(o, c))
        .collect();
    let mu_hat = Distribution::from_counts(&[6, 5, 0, 9]).unwrap();
    let predicted = advance_distribution(&mu_hat, &policy, b, n, &model).unwrap();

    let schedule = ProtocolSchedule::fixed(n, 1, b).unwrap();
    let samples = 10_000;
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    for _ in 0..samples {
        let batch = rollout_from(&policy, &model, &schedule, &initial, &mut rng).unwrap();
        assert_eq!(batch.empirical_mus()[0], mu_hat);
        for (o, p) in batch.empirical_mus()[1].iter().enumerate() {
            sum[o] += p;
            sum_sq[o] += p * p;
        }
    }
    let k = samples as f64;
    for o in 0..4 {
        let mean = sum[o] / k;
        let var = (sum_sq[o] / k - mean * mean).max(0.0);
        let se = (var / k).sqrt();
        assert!(
            (mean - predicted.get(o)).abs() <= 3.0 * se + 1e-12,
            "o={o}: empirical {mean} vs predicted {} (se {se})",
            predicted.get(o)
        );
    }
}
