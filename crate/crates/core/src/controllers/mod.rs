//! Recurrent value-based controllers: per-agent GRU Q-networks trained with
//! independent Q-learning or QMIX over replayed episodes.

mod learner;
mod nets;
mod replay;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use learner::{Learner, TrainBatchStats};
pub use nets::{QMixer, RecurrentQNet, HYPERNET_HIDDEN, MIXER_EMBED};
pub use replay::{Episode, EpisodeReplay};

use crate::envs::ScenarioId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Algorithm {
    Iql,
    Qmix,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Iql => "iql",
            Algorithm::Qmix => "qmix",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iql" => Ok(Algorithm::Iql),
            "qmix" => Ok(Algorithm::Qmix),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.as_str().to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Controller hyperparameters. Field names follow the usual table headings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub reward_standardisation: bool,
    pub epsilon_start: f64,
    pub epsilon_finish: f64,
    pub epsilon_anneal: u64,
    pub target_update: u64,
    pub gamma: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub grad_clip: Option<f64>,
    pub mixer_embed: usize,
    pub hypernet_hidden: usize,
}

impl ControllerConfig {
    pub fn defaults(algorithm: Algorithm, scenario: ScenarioId) -> Self {
        let lbf = scenario == ScenarioId::Foraging;
        let (learning_rate, epsilon_anneal) = match (algorithm, lbf) {
            (Algorithm::Iql, false) => (5e-4, 500_000),
            (Algorithm::Qmix, false) => (5e-4, 50_000),
            (Algorithm::Iql, true) => (3e-4, 100_000),
            (Algorithm::Qmix, true) => (1e-4, 100_000),
        };
        ControllerConfig {
            hidden_dim: 256,
            learning_rate,
            reward_standardisation: true,
            epsilon_start: 1.0,
            epsilon_finish: 0.05,
            epsilon_anneal,
            target_update: 200,
            gamma: 0.99,
            buffer_size: 5000,
            batch_size: 32,
            grad_clip: None,
            mixer_embed: MIXER_EMBED,
            hypernet_hidden: HYPERNET_HIDDEN,
        }
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            finish: self.epsilon_finish,
            anneal: self.epsilon_anneal,
        }
    }
}

/// Linear decay from `start` to `finish` over `anneal` environment steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub finish: f64,
    pub anneal: u64,
}

pub const EVAL_EPSILON: f64 = 0.0;

impl EpsilonSchedule {
    pub fn value(&self, env_steps: u64) -> f64 {
        if self.anneal == 0 || env_steps >= self.anneal {
            return self.finish;
        }
        let frac = env_steps as f64 / self.anneal as f64;
        self.start + (self.finish - self.start) * frac
    }
}

/// Greedy index with ties going to the lowest index.
pub fn argmax(q: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in q.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// ε-greedy choice. The rng is only consulted when `eps > 0`.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], eps: f64, rng: &mut R) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::InvalidArgument("select_action on an empty Q-vector".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("epsilon {eps} outside [0, 1]")));
    }
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(argmax(q).expect("nonempty"))
}

/// Running reward statistics (Welford, population variance).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RewardStandardizer {
    count: u64,
    mean: f64,
    m2: f64,
}

const STANDARDIZE_EPS: f64 = 1e-6;

impl RewardStandardizer {
    pub fn update(&mut self, r: f64) {
        self.count += 1;
        let d = r - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (r - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn standardize(&self, r: f64) -> f64 {
        (r - self.mean) / (self.variance() + STANDARDIZE_EPS).sqrt()
    }
}
