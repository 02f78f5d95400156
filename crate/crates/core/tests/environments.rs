use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmf_core::dynamics::{estimate_lipschitz, roll_forward};
use tmf_core::environments::dqg::FREE;
use tmf_core::environments::srsg::WAITING;
use tmf_core::environments::{make_dqg, make_srsg, DqgConfig, SrsgConfig};
use tmf_core::learning::simulate;
use tmf_core::model::random_simplex_point;
use tmf_core::{rng, Distribution, MeanFieldModel, PolicyParams};

fn assert_kernels_valid<M: MeanFieldModel>(model: &M, probes: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.num_observations();
    for _ in 0..probes {
        let mu = if rng.random_bool(0.2) {
            Distribution::point_mass(n, rng.random_range(0..n))
        } else {
            random_simplex_point(n, &mut rng)
        };
        for o in 0..n {
            let drift = model.passive_transition(o, &mu);
            assert!((drift.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for a in 0..model.num_actions() {
                let k = model.active_transition(o, a, &mu);
                assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(model.reward(o, a, &mu).abs() <= model.reward_bound());
            }
            assert!(model.terminal_reward(o, &mu).abs() <= model.reward_bound());
            assert!(model.expected_passive_reward(o, &mu).abs() <= model.reward_bound());
        }
    }
}

#[test]
fn srsg_kernels_are_closed_on_the_simplex() {
    let (model, _, _) = make_srsg(&SrsgConfig::default()).unwrap();
    assert_kernels_valid(&model, 10_000, 1);
}

#[test]
fn dqg_kernels_are_closed_on_the_simplex() {
    let (model, _, _) = make_dqg(&DqgConfig::default()).unwrap();
    assert_kernels_valid(&model, 10_000, 2);
}

#[test]
fn srsg_congestion_constant_is_at_most_one_under_l1() {
    let (model, _, _) = make_srsg(&SrsgConfig::default()).unwrap();
    let policy = PolicyParams::zeros(6, 5);
    let est = estimate_lipschitz(&model, &policy, 6000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(est.constants.l_r <= 1.0 + 1e-12, "L_r = {}", est.constants.l_r);
    assert!(est.constants.l_r > 0.9, "L_r = {}", est.constants.l_r);
    assert_eq!(est.constants.l_p, 0.0);
    assert_eq!(est.constants.l_p0, 0.0);
}

#[test]
fn srsg_full_batch_absorbs_everyone_in_one_step() {
    let (model, schedule, mu0) = make_srsg(&SrsgConfig::default().with_population(100, 100)).unwrap();
    let uniform = PolicyParams::zeros(6, 5);
    let traj = roll_forward(&mu0, &uniform, &schedule, &model).unwrap();
    assert_eq!(traj.horizon(), 1);
    assert_eq!(traj.last().get(WAITING), 0.0);
    let sim = simulate(&model.myopic(), &model, &schedule, &mu0, &mut rng::stream(0, 0)).unwrap();
    assert_eq!(sim.welfare(), 0.5);
}

#[test]
fn srsg_sequential_myopic_spreads_out() {
    let (model, schedule, mu0) = make_srsg(&SrsgConfig::default()).unwrap();
    let sim = simulate(&model.myopic(), &model, &schedule, &mu0, &mut rng::stream(0, 0)).unwrap();
    assert!((1.05..=1.16).contains(&sim.welfare()), "welfare {}", sim.welfare());
}

#[test]
fn dqg_flow_is_conserved_in_simulation() {
    let (model, schedule, mu0) = make_dqg(&DqgConfig::default()).unwrap();
    let sim = simulate(&model.myopic(), &model, &schedule, &mu0, &mut rng::stream(1, 0)).unwrap();
    for mu in &sim.trajectory.distributions {
        assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(sim.trajectory.at(0).get(FREE), 1.0);
    assert!(sim.welfare() > 0.0);
}
