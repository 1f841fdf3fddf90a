//! Cooperative scenarios: five particle-world tasks, one grid-world foraging
//! task, and a constant-velocity toy world used to validate the predictive
//! model end to end.

mod foraging;
mod particle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use foraging::{ForagingEnv, GridWorld, FORAGING_ACTIONS, GRID_SIZE, SIGHT};
pub use particle::{
    physics_step, spread_reward, ParticleEnv, ParticleWorld, ACCEL_GAIN, AGENT_RADIUS, COLLISION_PENALTY, DAMPING, DT,
    EPISODE_STEPS, MOVE_ACTIONS,
};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScenarioId {
    SpeakerListener,
    HearSee,
    SpreadXy2,
    SpreadXy4,
    SpreadBlindfold,
    Foraging,
    /// Two agents drifting at constant velocity; each must name the quadrant
    /// its teammate occupies.
    ConstantVelocity,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::SpeakerListener,
        ScenarioId::HearSee,
        ScenarioId::SpreadXy2,
        ScenarioId::SpreadXy4,
        ScenarioId::SpreadBlindfold,
        ScenarioId::Foraging,
        ScenarioId::ConstantVelocity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::SpeakerListener => "sl",
            ScenarioId::HearSee => "hs",
            ScenarioId::SpreadXy2 => "sxy2",
            ScenarioId::SpreadXy4 => "sxy4",
            ScenarioId::SpreadBlindfold => "sbf",
            ScenarioId::Foraging => "lbf",
            ScenarioId::ConstantVelocity => "cv",
        }
    }

    pub fn is_particle(self) -> bool {
        !matches!(self, ScenarioId::Foraging)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

impl From<ScenarioId> for String {
    fn from(id: ScenarioId) -> String {
        id.as_str().to_string()
    }
}

impl TryFrom<String> for ScenarioId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardKind {
    /// Negative distance of the listener to its goal landmark.
    GoalDistance,
    /// Negative sum over landmarks of the closest-agent distance, minus collision penalties.
    Spread { collisions: bool },
    /// Normalized food level collected this step.
    Foraging,
    /// Minus the number of wrong quadrant guesses.
    QuadrantGuess,
}

/// Static description of a scenario: agent count, observation and action
/// sizes, horizon and reward.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub obs_dims: Vec<usize>,
    pub action_counts: Vec<usize>,
    pub max_steps: usize,
    pub reward: RewardKind,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId) -> Self {
        let (obs_dims, action_counts, max_steps, reward) = match id {
            ScenarioId::SpeakerListener => (vec![3, 11], vec![3, MOVE_ACTIONS], EPISODE_STEPS, RewardKind::GoalDistance),
            ScenarioId::HearSee => (
                vec![2, 8],
                vec![MOVE_ACTIONS; 2],
                EPISODE_STEPS,
                RewardKind::Spread { collisions: false },
            ),
            ScenarioId::SpreadXy2 => (
                vec![8, 8],
                vec![MOVE_ACTIONS; 2],
                EPISODE_STEPS,
                RewardKind::Spread { collisions: true },
            ),
            ScenarioId::SpreadXy4 => (
                vec![12; 4],
                vec![MOVE_ACTIONS; 4],
                EPISODE_STEPS,
                RewardKind::Spread { collisions: true },
            ),
            ScenarioId::SpreadBlindfold => (
                vec![10; 3],
                vec![MOVE_ACTIONS; 3],
                EPISODE_STEPS,
                RewardKind::Spread { collisions: true },
            ),
            ScenarioId::Foraging => (vec![12, 12], vec![FORAGING_ACTIONS; 2], 50, RewardKind::Foraging),
            ScenarioId::ConstantVelocity => (vec![4, 4], vec![5, 5], EPISODE_STEPS, RewardKind::QuadrantGuess),
        };
        ScenarioSpec {
            id,
            obs_dims,
            action_counts,
            max_steps,
            reward,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.obs_dims.len()
    }

    pub fn joint_dim(&self) -> usize {
        self.obs_dims.iter().sum()
    }

    /// Column offset of each agent's slot in the concatenated joint observation.
    pub fn slot_offsets(&self) -> Vec<usize> {
        self.obs_dims
            .iter()
            .scan(0, |acc, &d| {
                let start = *acc;
                *acc += d;
                Some(start)
            })
            .collect()
    }
}

/// Per-agent observation vectors for one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct JointObservation(pub Vec<Vec<f64>>);

impl JointObservation {
    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn concat(&self) -> Vec<f64> {
        self.0.concat()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: JointObservation,
    /// Shared team reward.
    pub reward: f64,
    pub done: bool,
}

/// Position and velocity of one agent, for trajectory dumps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

/// One line of a per-episode trajectory dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub agent: usize,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub reward: f64,
}

pub trait Environment: Send {
    fn spec(&self) -> &ScenarioSpec;

    /// Starts a new episode and returns the initial joint observation.
    fn reset(&mut self) -> JointObservation;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    fn observe(&self, agent: usize) -> Result<Vec<f64>>;

    fn kinematics(&self) -> Vec<Kinematics>;

    fn step_count(&self) -> usize;

    fn joint_observation(&self) -> JointObservation {
        JointObservation(
            (0..self.spec().n_agents())
                .map(|i| self.observe(i).expect("agent index in range"))
                .collect(),
        )
    }

    /// Trajectory-dump lines for the current state.
    fn trajectory_records(&self, reward: f64) -> Vec<TrajectoryRecord> {
        let t = self.step_count();
        self.kinematics()
            .into_iter()
            .enumerate()
            .map(|(agent, k)| TrajectoryRecord {
                t,
                agent,
                pos: k.pos,
                vel: k.vel,
                reward,
            })
            .collect()
    }
}

/// Builds a scenario with its own random stream derived from `seed`.
pub fn make_env(id: ScenarioId, seed: u64) -> Box<dyn Environment> {
    match id {
        ScenarioId::Foraging => Box::new(ForagingEnv::new(seed)),
        _ => Box::new(ParticleEnv::new(id, seed)),
    }
}

pub(crate) fn check_actions(spec: &ScenarioSpec, actions: &[usize]) -> Result<()> {
    if actions.len() != spec.n_agents() {
        return Err(Error::shape("step", spec.n_agents(), actions.len()));
    }
    for (agent, (&action, &count)) in actions.iter().zip(&spec.action_counts).enumerate() {
        if action >= count {
            return Err(Error::ActionOutOfRange { agent, action, count });
        }
    }
    Ok(())
}
