use std::collections::VecDeque;

use rand::Rng;

use crate::comms::CommMask;
use crate::error::{Error, Result};

/// One collected episode of length `T`, stored time-major.
///
/// `inputs` and `states` hold `T + 1` rows so that the value of the final
/// observation is available for the last TD target.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `[agent][t]` controller input vectors, `t = 0..=T`.
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// `[t][agent]`, `t = 0..T`.
    pub actions: Vec<Vec<usize>>,
    /// Raw shared rewards.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Global state (concatenated true observations), `t = 0..=T`.
    pub states: Vec<Vec<f64>>,
    /// Sharing masks that produced the inputs, `t = 0..=T`.
    pub masks: Vec<CommMask>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.inputs.len()
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        let bad = |what: &str, want: usize, got: usize| Err(Error::shape("episode", format!("{want} {what}"), got));
        if self.rewards.len() != t {
            return bad("rewards", t, self.rewards.len());
        }
        if self.dones.len() != t {
            return bad("done flags", t, self.dones.len());
        }
        if self.states.len() != t + 1 {
            return bad("states", t + 1, self.states.len());
        }
        if let Some(row) = self.inputs.iter().find(|r| r.len() != t + 1) {
            return bad("input rows", t + 1, row.len());
        }
        if let Some(a) = self.actions.iter().find(|a| a.len() != self.n_agents()) {
            return bad("actions per step", self.n_agents(), a.len());
        }
        Ok(())
    }
}

/// FIFO buffer of whole episodes.
#[derive(Clone, Debug)]
pub struct EpisodeReplay {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl EpisodeReplay {
    pub fn new(capacity: usize) -> Self {
        EpisodeReplay {
            capacity: capacity.max(1),
            episodes: VecDeque::new(),
        }
    }

    pub fn push(&mut self, ep: Episode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Episode> {
        self.episodes.get(i)
    }

    pub fn can_sample(&self, batch: usize) -> bool {
        self.episodes.len() >= batch
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Episode> {
        rand::seq::index::sample(rng, self.episodes.len(), batch.min(self.episodes.len()))
            .into_iter()
            .map(|i| &self.episodes[i])
            .collect()
    }
}
