use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, Environment, JointObservation, Kinematics, RewardKind, ScenarioId, ScenarioSpec, StepResult};
use crate::error::{Error, Result};

pub const DT: f64 = 0.1;
pub const DAMPING: f64 = 0.25;
/// Force magnitude of one movement action (unit mass).
pub const ACCEL_GAIN: f64 = 5.0;
pub const EPISODE_STEPS: usize = 25;
pub const AGENT_RADIUS: f64 = 0.15;
pub const COLLISION_PENALTY: f64 = 1.0;
/// noop, +x, −x, +y, −y
pub const MOVE_ACTIONS: usize = 5;

const LANDMARK_COLORS: [[f64; 3]; 3] = [[0.65, 0.15, 0.15], [0.15, 0.65, 0.15], [0.15, 0.15, 0.65]];

/// Point-mass state shared by all particle scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleWorld {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub landmarks: Vec<[f64; 2]>,
    pub dt: f64,
    pub damping: f64,
    pub max_steps: usize,
    pub step: usize,
}

impl ParticleWorld {
    pub fn n_agents(&self) -> usize {
        self.pos.len()
    }
}

/// `v' = v·(1 − damping) + F·dt`, then `x' = x + v'·dt`, for unit-mass agents.
pub fn physics_step(world: &mut ParticleWorld, forces: &[[f64; 2]]) {
    debug_assert_eq!(forces.len(), world.n_agents());
    let keep = 1.0 - world.damping;
    for ((p, v), f) in world.pos.iter_mut().zip(&mut world.vel).zip(forces) {
        for k in 0..2 {
            v[k] = v[k] * keep + f[k] * world.dt;
            p[k] += v[k] * world.dt;
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Number of agent pairs closer than two agent radii.
pub(crate) fn colliding_pairs(agents: &[[f64; 2]]) -> usize {
    let mut n = 0;
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            if dist(agents[i], agents[j]) < 2.0 * AGENT_RADIUS {
                n += 1;
            }
        }
    }
    n
}

/// `−Σ_landmarks min_agents ‖x_agent − x_landmark‖ − penalty · 2 · #colliding pairs`.
///
/// Each colliding pair is charged once for each of its two agents. A zero
/// penalty disables collisions.
pub fn spread_reward(agents: &[[f64; 2]], landmarks: &[[f64; 2]], collision_penalty: f64) -> f64 {
    let coverage: f64 = landmarks
        .iter()
        .map(|&l| agents.iter().map(|&a| dist(a, l)).fold(f64::INFINITY, f64::min))
        .sum();
    let collisions = if collision_penalty != 0.0 {
        collision_penalty * 2.0 * colliding_pairs(agents) as f64
    } else {
        0.0
    };
    -coverage - collisions
}

fn action_force(action: usize) -> [f64; 2] {
    match action {
        1 => [ACCEL_GAIN, 0.0],
        2 => [-ACCEL_GAIN, 0.0],
        3 => [0.0, ACCEL_GAIN],
        4 => [0.0, -ACCEL_GAIN],
        _ => [0.0, 0.0],
    }
}

/// Quadrant index 1..=4 (counter-clockwise from +x,+y) used by the toy world.
fn quadrant(p: [f64; 2]) -> usize {
    match (p[0] >= 0.0, p[1] >= 0.0) {
        (true, true) => 1,
        (false, true) => 2,
        (false, false) => 3,
        (true, false) => 4,
    }
}

/// A particle-world scenario with its own random stream.
pub struct ParticleEnv {
    spec: ScenarioSpec,
    world: ParticleWorld,
    rng: ChaCha8Rng,
    /// SpeakerListener: goal landmark index.
    goal: usize,
    /// SpeakerListener: symbol uttered on the previous step.
    symbol: Option<usize>,
}

impl ParticleEnv {
    pub fn new(id: ScenarioId, seed: u64) -> Self {
        assert!(id.is_particle(), "{id} is not a particle scenario");
        let spec = ScenarioSpec::new(id);
        let (n_landmarks, damping) = match id {
            ScenarioId::SpeakerListener => (3, DAMPING),
            ScenarioId::HearSee => (1, DAMPING),
            ScenarioId::SpreadXy2 => (2, DAMPING),
            ScenarioId::SpreadXy4 => (4, DAMPING),
            ScenarioId::SpreadBlindfold => (3, DAMPING),
            ScenarioId::ConstantVelocity => (0, 0.0),
            ScenarioId::Foraging => unreachable!(),
        };
        let n = spec.n_agents();
        let world = ParticleWorld {
            pos: vec![[0.0; 2]; n],
            vel: vec![[0.0; 2]; n],
            landmarks: vec![[0.0; 2]; n_landmarks],
            dt: DT,
            damping,
            max_steps: spec.max_steps,
            step: 0,
        };
        let mut env = ParticleEnv {
            spec,
            world,
            rng: ChaCha8Rng::seed_from_u64(seed),
            goal: 0,
            symbol: None,
        };
        env.reset();
        env
    }

    pub fn world(&self) -> &ParticleWorld {
        &self.world
    }

    fn uniform_point(&mut self) -> [f64; 2] {
        [self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0)]
    }

    /// X-or-Y slice of a two-agent team: positions then velocities along `axis`.
    fn axis_view(&self, members: [usize; 2], axis: usize) -> [f64; 4] {
        let w = &self.world;
        [
            w.pos[members[0]][axis],
            w.pos[members[1]][axis],
            w.vel[members[0]][axis],
            w.vel[members[1]][axis],
        ]
    }

    fn landmark_flat(&self) -> Vec<f64> {
        self.world.landmarks.iter().flatten().copied().collect()
    }

    fn reward(&self, actions: &[usize], before: &[[f64; 2]]) -> f64 {
        let w = &self.world;
        match self.spec.reward {
            RewardKind::GoalDistance => -dist(w.pos[1], w.landmarks[self.goal]),
            RewardKind::Spread { collisions } => {
                spread_reward(&w.pos, &w.landmarks, if collisions { COLLISION_PENALTY } else { 0.0 })
            }
            RewardKind::QuadrantGuess => {
                // Guesses refer to the teammate's position when the guess was made.
                let wrong = (0..2).filter(|&i| actions[i] != quadrant(before[1 - i])).count();
                -(wrong as f64)
            }
            RewardKind::Foraging => unreachable!(),
        }
    }
}

impl Environment for ParticleEnv {
    fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    fn reset(&mut self) -> JointObservation {
        let n = self.spec.n_agents();
        for i in 0..n {
            self.world.pos[i] = self.uniform_point();
            self.world.vel[i] = [0.0; 2];
        }
        for l in 0..self.world.landmarks.len() {
            self.world.landmarks[l] = self.uniform_point();
        }
        if self.spec.id == ScenarioId::ConstantVelocity {
            for i in 0..n {
                self.world.vel[i] = [self.rng.random_range(-0.5..=0.5), self.rng.random_range(-0.5..=0.5)];
            }
        }
        if self.spec.id == ScenarioId::SpeakerListener {
            self.goal = self.rng.random_range(0..3);
            self.symbol = None;
        }
        self.world.step = 0;
        self.joint_observation()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec, actions)?;
        let before = self.world.pos.clone();
        let forces: Vec<[f64; 2]> = match self.spec.id {
            // The speaker does not move; its action is the uttered symbol.
            ScenarioId::SpeakerListener => vec![[0.0; 2], action_force(actions[1])],
            ScenarioId::ConstantVelocity => vec![[0.0; 2]; 2],
            _ => actions.iter().map(|&a| action_force(a)).collect(),
        };
        physics_step(&mut self.world, &forces);
        if self.spec.id == ScenarioId::SpeakerListener {
            self.symbol = Some(actions[0]);
        }
        self.world.step += 1;
        let reward = self.reward(actions, &before);
        Ok(StepResult {
            obs: self.joint_observation(),
            reward,
            done: self.world.step >= self.world.max_steps,
        })
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>> {
        let n = self.spec.n_agents();
        if agent >= n {
            return Err(Error::AgentIndex { index: agent, n });
        }
        let w = &self.world;
        let obs = match self.spec.id {
            ScenarioId::SpeakerListener => {
                if agent == 0 {
                    LANDMARK_COLORS[self.goal].to_vec()
                } else {
                    let mut o = w.vel[1].to_vec();
                    for l in &w.landmarks {
                        o.extend([l[0] - w.pos[1][0], l[1] - w.pos[1][1]]);
                    }
                    let mut comm = [0.0; 3];
                    if let Some(s) = self.symbol {
                        comm[s] = 1.0;
                    }
                    o.extend(comm);
                    o
                }
            }
            ScenarioId::HearSee => {
                if agent == 0 {
                    w.landmarks[0].to_vec()
                } else {
                    vec![
                        w.pos[0][0], w.pos[0][1], w.pos[1][0], w.pos[1][1], w.vel[0][0], w.vel[0][1], w.vel[1][0],
                        w.vel[1][1],
                    ]
                }
            }
            ScenarioId::SpreadXy2 | ScenarioId::SpreadXy4 => {
                let team = agent / 2;
                let mut o = self.axis_view([2 * team, 2 * team + 1], agent % 2).to_vec();
                o.extend(self.landmark_flat());
                o
            }
            ScenarioId::SpreadBlindfold => {
                let mut o = vec![w.pos[agent][0], w.pos[agent][1], w.vel[agent][0], w.vel[agent][1]];
                o.extend(self.landmark_flat());
                o
            }
            ScenarioId::ConstantVelocity => {
                vec![w.pos[agent][0], w.pos[agent][1], w.vel[agent][0], w.vel[agent][1]]
            }
            ScenarioId::Foraging => unreachable!(),
        };
        Ok(obs)
    }

    fn kinematics(&self) -> Vec<Kinematics> {
        self.world
            .pos
            .iter()
            .zip(&self.world.vel)
            .map(|(&pos, &vel)| Kinematics { pos, vel })
            .collect()
    }

    fn step_count(&self) -> usize {
        self.world.step
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn world_with(vel: [f64; 2]) -> ParticleWorld {
        ParticleWorld {
            pos: vec![[0.0, 0.0]],
            vel: vec![vel],
            landmarks: vec![],
            dt: DT,
            damping: DAMPING,
            max_steps: EPISODE_STEPS,
            step: 0,
        }
    }

    #[test]
    fn damping_without_force() {
        let mut w = world_with([1.0, 0.0]);
        physics_step(&mut w, &[[0.0, 0.0]]);
        assert!((w.vel[0][0] - 0.75).abs() < 1e-15);
        assert!((w.pos[0][0] - 0.075).abs() < 1e-15);
        assert_eq!(w.pos[0][1], 0.0);
    }

    #[test]
    fn unit_force_from_rest() {
        let mut w = world_with([0.0, 0.0]);
        physics_step(&mut w, &[[1.0, 0.0]]);
        assert!((w.vel[0][0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn velocity_decays_geometrically() {
        let mut w = world_with([2.0, -1.0]);
        let mut prev = 5f64.sqrt();
        for _ in 0..60 {
            physics_step(&mut w, &[[0.0, 0.0]]);
            let speed = w.vel[0][0].hypot(w.vel[0][1]);
            assert!((speed - prev * 0.75).abs() < 1e-12);
            prev = speed;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn spread_reward_cases() {
        assert_eq!(spread_reward(&[[0.5, 0.5], [-0.5, 0.2]], &[[0.5, 0.5], [-0.5, 0.2]], 1.0), 0.0);
        assert_eq!(spread_reward(&[[2.0, 0.0], [0.0, 3.0]], &[[0.0, 0.0]], 1.0), -2.0);
        // two overlapping agents at distance 0.1 < 0.3, landmarks far away
        let agents = [[0.0, 0.0], [0.1, 0.0]];
        let lm = [[0.0, 1.0]];
        let expected = -1.0 - 2.0;
        assert!((spread_reward(&agents, &lm, 1.0) - expected).abs() < 1e-12);
        assert!((spread_reward(&agents, &lm, 0.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn noop_from_rest_keeps_positions() {
        let mut env = ParticleEnv::new(ScenarioId::SpreadBlindfold, 3);
        let before = env.world().pos.clone();
        env.step(&[0, 0, 0]).unwrap();
        assert_eq!(env.world().pos, before);
    }

    #[test]
    fn reset_state_and_bounds() {
        let mut env = ParticleEnv::new(ScenarioId::SpreadXy4, 11);
        for _ in 0..20 {
            env.reset();
            let w = env.world();
            assert!(w.vel.iter().all(|v| *v == [0.0, 0.0]));
            for p in w.pos.iter().chain(&w.landmarks) {
                assert!(p.iter().all(|c| (-1.0..=1.0).contains(c)));
            }
            assert_eq!(w.step, 0);
        }
    }

    #[test]
    fn episode_runs_exactly_max_steps_with_nonpositive_return() {
        for id in [ScenarioId::HearSee, ScenarioId::SpreadXy2, ScenarioId::SpreadBlindfold] {
            let mut env = ParticleEnv::new(id, 5);
            let n = env.spec().n_agents();
            let mut ret = 0.0;
            for t in 0..EPISODE_STEPS {
                let res = env.step(&vec![t % 5; n]).unwrap();
                ret += res.reward;
                assert_eq!(res.done, t + 1 == EPISODE_STEPS);
            }
            assert!(ret <= 0.0);
        }
    }

    #[test]
    fn scenario_membership() {
        let hs = ParticleEnv::new(ScenarioId::HearSee, 0);
        assert_eq!(hs.spec().n_agents(), 2);
        assert_ne!(hs.spec().obs_dims[0], hs.spec().obs_dims[1]);
        assert_eq!(hs.spec().obs_dims[0], 2);
        let sbf = ParticleEnv::new(ScenarioId::SpreadBlindfold, 0);
        assert_eq!(sbf.spec().n_agents(), 3);
        assert_eq!(sbf.world().landmarks.len(), 3);
        assert_eq!(sbf.spec().obs_dims, vec![10, 10, 10]);
    }

    #[test]
    fn speaker_symbol_reaches_listener_next_step() {
        let mut env = ParticleEnv::new(ScenarioId::SpeakerListener, 9);
        assert_eq!(&env.observe(1).unwrap()[8..], &[0.0, 0.0, 0.0]);
        let res = env.step(&[2, 0]).unwrap();
        assert_eq!(&res.obs.agent(1)[8..], &[0.0, 0.0, 1.0]);
        assert_eq!(res.obs.agent(0), &LANDMARK_COLORS[env.goal]);
    }

    #[test]
    fn xy_agents_split_axes() {
        let mut env = ParticleEnv::new(ScenarioId::SpreadXy2, 4);
        env.step(&[1, 3]).unwrap();
        let w = env.world().clone();
        let x = env.observe(0).unwrap();
        let y = env.observe(1).unwrap();
        assert_eq!(&x[..4], &[w.pos[0][0], w.pos[1][0], w.vel[0][0], w.vel[1][0]]);
        assert_eq!(&y[..4], &[w.pos[0][1], w.pos[1][1], w.vel[0][1], w.vel[1][1]]);
        assert_eq!(&x[4..], &[w.landmarks[0][0], w.landmarks[0][1], w.landmarks[1][0], w.landmarks[1][1]]);
    }

    #[test]
    fn constant_velocity_world_is_exact() {
        let mut env = ParticleEnv::new(ScenarioId::ConstantVelocity, 2);
        let o0 = env.observe(0).unwrap();
        let res = env.step(&[0, 0]).unwrap();
        let o1 = res.obs.agent(0);
        assert_eq!(o1[2..], o0[2..]);
        assert!((o1[0] - (o0[0] + o0[2] * DT)).abs() < 1e-15);
        assert!(res.reward == -2.0);
    }

    proptest! {
        #[test]
        fn spread_reward_is_permutation_invariant(
            agents in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..5),
            landmarks in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..5),
            rot_a in 0usize..5, rot_l in 0usize..5,
        ) {
            let a: Vec<[f64; 2]> = agents.iter().map(|&(x, y)| [x, y]).collect();
            let l: Vec<[f64; 2]> = landmarks.iter().map(|&(x, y)| [x, y]).collect();
            let mut a2 = a.clone();
            a2.rotate_left(rot_a % a.len());
            a2.reverse();
            let mut l2 = l.clone();
            l2.rotate_left(rot_l % l.len());
            let r1 = spread_reward(&a, &l, 1.0);
            let r2 = spread_reward(&a2, &l2, 1.0);
            prop_assert!((r1 - r2).abs() < 1e-12);
            prop_assert!(r1 <= 0.0);
        }
    }
}
