use hmarl::envs::{make_env, ScenarioId, ScenarioSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario() -> impl Strategy<Value = ScenarioId> {
    prop::sample::select(ScenarioId::ALL.to_vec())
}

/// Rewards and observations of one random-action episode.
fn rollout(id: ScenarioId, env_seed: u64, act_seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let spec = ScenarioSpec::new(id);
    let mut env = make_env(id, env_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(act_seed);
    let mut obs = vec![env.reset().concat()];
    let mut rewards = Vec::new();
    loop {
        let a: Vec<usize> = spec.action_counts.iter().map(|&k| rng.random_range(0..k)).collect();
        let r = env.step(&a).unwrap();
        rewards.push(r.reward);
        obs.push(r.obs.concat());
        if r.done {
            return (rewards, obs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episodes_match_spec(id in scenario(), env_seed in any::<u64>(), act_seed in any::<u64>()) {
        let spec = ScenarioSpec::new(id);
        let (rewards, obs) = rollout(id, env_seed, act_seed);
        prop_assert_eq!(rewards.len(), spec.max_steps);
        prop_assert!(rewards.iter().all(|r| r.is_finite()));
        if id.is_particle() {
            prop_assert!(rewards.iter().all(|&r| r <= 0.0));
        } else {
            prop_assert!(rewards.iter().all(|&r| r >= 0.0));
        }
        for o in &obs {
            prop_assert_eq!(o.len(), spec.joint_dim());
            prop_assert!(o.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn same_seeds_same_episode(id in scenario(), env_seed in any::<u64>(), act_seed in any::<u64>()) {
        prop_assert_eq!(rollout(id, env_seed, act_seed), rollout(id, env_seed, act_seed));
    }

    #[test]
    fn bad_actions_are_rejected(id in scenario(), seed in any::<u64>()) {
        let spec = ScenarioSpec::new(id);
        let mut env = make_env(id, seed);
        env.reset();
        let mut a = vec![0; spec.n_agents()];
        a[0] = spec.action_counts[0];
        prop_assert!(env.step(&a).is_err());
        prop_assert!(env.step(&a[1..]).is_err());
    }
}

#[test]
fn scenario_names_round_trip() {
    for id in ScenarioId::ALL {
        assert_eq!(id.as_str().parse::<ScenarioId>().unwrap(), id);
    }
    assert!("mars".parse::<ScenarioId>().is_err());
}
