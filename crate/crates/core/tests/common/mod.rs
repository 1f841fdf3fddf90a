//! Small worlds with independently computed answers, shared by the oracle
//! tests and the acceptance suite.
#![allow(dead_code)]

use hmarl::comms::CommMask;
use hmarl::controllers::{argmax, Algorithm, ControllerConfig, Episode, Learner, QMixer, RewardStandardizer};
use hmarl::diffcore::{Graph, ParamStore, Tensor};
use hmarl::envs::ScenarioId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GAMMA: f64 = 0.99;

/// Two-step deterministic chain: from `s0` either action leads to `s1`, and
/// the episode ends after acting in `s1`. `REWARDS[s][a]`.
pub const CHAIN_REWARDS: [[f64; 2]; 2] = [[0.0, 1.0], [2.0, 0.0]];

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    if i < n {
        v[i] = 1.0;
    }
    v
}

/// Backward induction over the chain table.
pub fn chain_value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for s in (0..2).rev() {
        let next = if s + 1 < 2 { q[s + 1][0].max(q[s + 1][1]) } else { 0.0 };
        for a in 0..2 {
            q[s][a] = CHAIN_REWARDS[s][a] + gamma * next;
        }
    }
    q
}

fn chain_episode(a0: usize, a1: usize) -> Episode {
    Episode {
        inputs: vec![vec![one_hot(0, 2), one_hot(1, 2), one_hot(2, 2)]],
        actions: vec![vec![a0], vec![a1]],
        rewards: vec![CHAIN_REWARDS[0][a0], CHAIN_REWARDS[1][a1]],
        dones: vec![false, true],
        states: vec![one_hot(0, 2), one_hot(1, 2), one_hot(2, 2)],
        masks: vec![CommMask::full(1); 3],
    }
}

fn test_config(algorithm: Algorithm) -> ControllerConfig {
    let mut c = ControllerConfig::defaults(algorithm, ScenarioId::HearSee);
    c.hidden_dim = 16;
    c.learning_rate = 3e-3;
    c.reward_standardisation = false;
    c.target_update = 25;
    c.gamma = GAMMA;
    c
}

/// Trains IQL on every action sequence of the chain and returns the greedy
/// network's Q-values at `s0` and `s1`.
pub fn chain_iql(steps: usize, seed: u64) -> [[f64; 2]; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = Learner::new(Algorithm::Iql, test_config(Algorithm::Iql), &[2], &[2], 2, &mut rng).unwrap();
    let episodes: Vec<Episode> = (0..4).map(|k| chain_episode(k / 2, k % 2)).collect();
    let batch: Vec<&Episode> = episodes.iter().collect();
    let stats = RewardStandardizer::default();
    for _ in 0..steps {
        learner.train(&batch, &stats).unwrap();
    }
    let mut h = learner.initial_hidden();
    let q0 = learner.q_values(0, &one_hot(0, 2), &mut h[0]).unwrap();
    let q1 = learner.q_values(0, &one_hot(1, 2), &mut h[0]).unwrap();
    [[q0[0], q0[1]], [q1[0], q1[1]]]
}

/// One-shot cooperative game with payoff `U1[a1] + U2[a2]`.
pub const U1: [f64; 3] = [0.0, 1.0, 0.5];
pub const U2: [f64; 3] = [0.2, -0.5, 1.2];

pub fn matrix_payoff(a1: usize, a2: usize) -> f64 {
    U1[a1] + U2[a2]
}

/// Best joint action by trying all nine.
pub fn matrix_optimum() -> (usize, usize) {
    let mut best = (0, 0);
    for a1 in 0..3 {
        for a2 in 0..3 {
            if matrix_payoff(a1, a2) > matrix_payoff(best.0, best.1) {
                best = (a1, a2);
            }
        }
    }
    best
}

/// Trains QMIX on all nine joint actions and returns each agent's greedy
/// choice.
pub fn matrix_game_qmix(steps: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = Learner::new(Algorithm::Qmix, test_config(Algorithm::Qmix), &[1, 1], &[3, 3], 1, &mut rng).unwrap();
    let episodes: Vec<Episode> = (0..9)
        .map(|k| {
            let (a1, a2) = (k / 3, k % 3);
            Episode {
                inputs: vec![vec![vec![1.0], vec![0.0]]; 2],
                actions: vec![vec![a1, a2]],
                rewards: vec![matrix_payoff(a1, a2)],
                dones: vec![true],
                states: vec![vec![1.0], vec![0.0]],
                masks: vec![CommMask::full(2); 2],
            }
        })
        .collect();
    let batch: Vec<&Episode> = episodes.iter().collect();
    let stats = RewardStandardizer::default();
    for _ in 0..steps {
        learner.train(&batch, &stats).unwrap();
    }
    let mut h = learner.initial_hidden();
    let q1 = learner.q_values(0, &[1.0], &mut h[0]).unwrap();
    let q2 = learner.q_values(1, &[1.0], &mut h[1]).unwrap();
    (argmax(&q1).unwrap(), argmax(&q2).unwrap())
}

/// Smallest central-difference slope `∂Q_tot/∂q_i` seen over random mixers,
/// states and utilities.
pub fn min_mixer_slope(probes: usize, seed: u64) -> f64 {
    const H: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, sd) = (3, 5);
    let mut store = ParamStore::new();
    let mixer = QMixer::new(&mut store, n, sd, 8, 16, &mut rng).unwrap();
    let q_tot = |q: &[f64], s: &[f64]| {
        let mut g = Graph::new(&store);
        let qv = g.constant(Tensor::new(&[1, n], q.to_vec()).unwrap());
        let sv = g.constant(Tensor::new(&[1, sd], s.to_vec()).unwrap());
        let y = mixer.forward(&mut g, qv, sv).unwrap();
        g.value(y).item().unwrap()
    };
    let mut min = f64::INFINITY;
    for _ in 0..probes {
        let s: Vec<f64> = (0..sd).map(|_| rng.random_range(-2.0..2.0)).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        for i in 0..n {
            let (mut up, mut dn) = (q.clone(), q.clone());
            up[i] += H;
            dn[i] -= H;
            min = min.min((q_tot(&up, &s) - q_tot(&dn, &s)) / (2.0 * H));
        }
    }
    min
}

use hmarl::comms::{draw_mask, shared_view, CommMatrix, CommProcess, CommScheme};
use hmarl::envs::{make_env, ScenarioSpec};
use hmarl::strategies::{build_exec_input, StrategyId, TrainInputBuilder};
use hmarl::worldmodel::{AgentModelInstance, PredictiveModel};

/// Largest gap between a link's empirical sharing frequency over `draws`
/// masks (all at `t > 0`) and its probability.
pub fn max_frequency_gap(c: &CommMatrix, draws: usize, seed: u64) -> f64 {
    let n = c.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; n * n];
    for _ in 0..draws {
        let m = draw_mask(c, 1, &mut rng);
        for i in 0..n {
            for j in 0..n {
                hits[i * n + j] += m.get(i, j) as usize;
            }
        }
    }
    let mut gap = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            gap = gap.max((hits[i * n + j] as f64 / draws as f64 - c.get(i, j)).abs());
        }
    }
    gap
}

/// Steps at which a dynamic process switched to a new matrix.
pub fn redraw_steps(interval: usize, n: usize, horizon: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut proc = CommProcess::begin_episode(CommScheme::Dynamic(interval), n, &mut rng);
    let mut prev = proc.matrix().clone();
    let mut out = Vec::new();
    for t in 0..horizon {
        proc.mask_at(t, &mut rng);
        if *proc.matrix() != prev {
            out.push(t);
            prev = proc.matrix().clone();
        }
    }
    out
}

/// Per-strategy controller inputs `[strategy][t][agent]` along one
/// random-action episode with every link up, at execution and at training.
pub struct FullCommInputs {
    pub strategies: Vec<StrategyId>,
    pub exec: Vec<Vec<Vec<Vec<f64>>>>,
    pub train: Vec<Vec<Vec<Vec<f64>>>>,
    /// True joint observation per step.
    pub joint: Vec<Vec<f64>>,
}

pub fn full_comm_inputs(scenario: ScenarioId, strategies: &[StrategyId], seed: u64) -> FullCommInputs {
    let spec = ScenarioSpec::new(scenario);
    let n = spec.n_agents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = PredictiveModel::new(&spec.obs_dims, 16, &mut rng).unwrap();
    let mut env = make_env(scenario, seed);
    let mut obs = env.reset();
    let mut joints = Vec::new();
    let mut actions = Vec::new();
    loop {
        joints.push(obs.clone());
        let a: Vec<usize> = spec.action_counts.iter().map(|&k| rng.random_range(0..k)).collect();
        let res = env.step(&a).unwrap();
        actions.push(a);
        obs = res.obs;
        if res.done {
            joints.push(obs.clone());
            break;
        }
    }
    let scheme = CommScheme::Fixed(1.0);
    let mut exec = Vec::new();
    let mut train = Vec::new();
    for &s in strategies {
        let m = s.uses_model().then_some(&model);
        let mut inst: Vec<AgentModelInstance> = (0..n).map(AgentModelInstance::new).collect();
        for i in &mut inst {
            i.reset(&model);
        }
        let mut proc = CommProcess::begin_episode(scheme, n, &mut rng);
        let mut builder = TrainInputBuilder::begin_episode(s, &spec, scheme, m, &mut rng).unwrap();
        let (mut ex, mut tr) = (Vec::new(), Vec::new());
        for (t, j) in joints.iter().enumerate() {
            let mask = proc.mask_at(t, &mut rng);
            let row: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let view = shared_view(j, &mask, i).unwrap();
                    let imp = m.map(|m| (m, &mut inst[i]));
                    build_exec_input(s, &spec, &view, imp).unwrap()
                })
                .collect();
            ex.push(row);
            tr.push(builder.build(j, t, m, &mut rng).unwrap().0);
        }
        exec.push(ex);
        train.push(tr);
    }
    FullCommInputs {
        strategies: strategies.to_vec(),
        exec,
        train,
        joint: joints.iter().map(|j| j.concat()).collect(),
    }
}

use hmarl::comms::CommMask as Mask;
use hmarl::worldmodel::{ModelConfig, ModelEpisode, ModelTrainer};

/// Joint observation streams of `episodes` constant-velocity episodes.
pub fn cv_streams(episodes: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut env = make_env(ScenarioId::ConstantVelocity, seed);
    (0..episodes)
        .map(|_| {
            let mut seq = vec![env.reset().concat()];
            loop {
                let res = env.step(&[0, 0]).unwrap();
                seq.push(res.obs.concat());
                if res.done {
                    break seq;
                }
            }
        })
        .collect()
}

pub struct CvModelReport {
    pub mean_abs_delta_error: f64,
    /// Mean Euclidean position error over both agents, every start step and
    /// every rollout depth `1..=horizon`.
    pub rollout_position_error: f64,
}

/// Trains the predictive model on constant-velocity episodes for `steps`
/// batches and scores it on held-out episodes.
pub fn cv_model_oracle(steps: usize, horizon: usize, seed: u64) -> CvModelReport {
    let spec = ScenarioSpec::new(ScenarioId::ConstantVelocity);
    let config = ModelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = PredictiveModel::new(&spec.obs_dims, config.hidden_dim, &mut rng).unwrap();
    let mut trainer = ModelTrainer::new(model, config);
    for seq in cv_streams(500, seed) {
        trainer.buffer.push(ModelEpisode::from_observations(&seq));
    }
    for _ in 0..steps {
        trainer.train_step(&mut rng).unwrap();
    }
    let model = &trainer.model;
    let streams = cv_streams(20, seed + 1_000_003);
    let held: Vec<ModelEpisode> = streams
        .iter()
        .map(|s| ModelEpisode::from_observations(s))
        .collect();
    let refs: Vec<&ModelEpisode> = held.iter().collect();
    let mae = model.mean_abs_delta_error(&refs).unwrap();

    let offs = model.offsets().to_vec();
    let (mut err, mut count) = (0.0, 0usize);
    for obs in &streams {
        let mut inst = AgentModelInstance::new(0);
        inst.reset(model);
        let joint_at = |t: usize| {
            let o: &Vec<f64> = &obs[t];
            hmarl::envs::JointObservation(offs.iter().zip(&spec.obs_dims).map(|(&a, &d)| o[a..a + d].to_vec()).collect())
        };
        for t in 0..obs.len() {
            let view = shared_view(&joint_at(t), &Mask::full(2), 0).unwrap();
            inst.step(model, &view).unwrap();
            if t + horizon >= obs.len() {
                continue;
            }
            for (k, pred) in inst.rollout(model, horizon).unwrap().iter().enumerate() {
                let truth = &obs[t + k + 1];
                for &a in &offs {
                    err += ((pred[a] - truth[a]).powi(2) + (pred[a + 1] - truth[a + 1]).powi(2)).sqrt();
                    count += 1;
                }
            }
        }
    }
    CvModelReport {
        mean_abs_delta_error: mae,
        rollout_position_error: err / count as f64,
    }
}
