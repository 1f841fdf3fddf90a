//! The observation-imputation model.
//!
//! Training is fully centralized: the model sees true joint observations and
//! learns `p(Δ_t | o_t, h_t)` factorized over agents. At execution time every
//! agent runs its own [`AgentModelInstance`], which fills the teammates'
//! slots it did not receive with the model's one-step predictions.

mod instance;
mod model;

use std::collections::VecDeque;

use rand::Rng;

pub use instance::AgentModelInstance;
pub use model::{LossVars, ModelState, PredictiveModel, StepVars, LOGVAR_MAX, LOGVAR_MIN};

use crate::diffcore::{adam_step, clip_global_norm, AdamState, Graph};
use crate::error::{Error, Result};

/// One episode of `(o_t, Δ_t)` pairs with `Δ_t = o_{t+1} − o_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelEpisode {
    pub obs: Vec<Vec<f64>>,
    pub deltas: Vec<Vec<f64>>,
}

impl ModelEpisode {
    /// Builds the pairs from `T + 1` consecutive joint observations.
    pub fn from_observations(seq: &[Vec<f64>]) -> Self {
        let obs: Vec<Vec<f64>> = seq.iter().take(seq.len().saturating_sub(1)).cloned().collect();
        let deltas = seq
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect();
        ModelEpisode { obs, deltas }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.obs.len() != self.deltas.len() {
            return Err(Error::shape("model_loss", self.obs.len(), self.deltas.len()));
        }
        if let Some(bad) = self.obs.iter().chain(&self.deltas).find(|v| v.len() != dim) {
            return Err(Error::shape("model_loss", dim, bad.len()));
        }
        Ok(())
    }
}

/// FIFO store of whole episodes.
#[derive(Clone, Debug)]
pub struct ModelBuffer {
    capacity: usize,
    episodes: VecDeque<ModelEpisode>,
}

impl ModelBuffer {
    pub fn new(capacity: usize) -> Self {
        ModelBuffer {
            capacity: capacity.max(1),
            episodes: VecDeque::new(),
        }
    }

    pub fn push(&mut self, episode: ModelEpisode) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&ModelEpisode> {
        self.episodes.get(i)
    }

    /// `batch` distinct episodes chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&ModelEpisode> {
        rand::seq::index::sample(rng, self.episodes.len(), batch.min(self.episodes.len()))
            .into_iter()
            .map(|i| &self.episodes[i])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 128,
            learning_rate: 1e-3,
            grad_clip: 1.0,
            buffer_size: 5000,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainOutcome {
    /// Not enough episodes yet; parameters untouched.
    WarmingUp,
    Trained { loss: f64 },
}

impl TrainOutcome {
    pub fn loss(self) -> Option<f64> {
        match self {
            TrainOutcome::Trained { loss } => Some(loss),
            TrainOutcome::WarmingUp => None,
        }
    }
}

/// Model, optimizer state and episode buffer.
#[derive(Clone, Debug)]
pub struct ModelTrainer {
    pub model: PredictiveModel,
    pub buffer: ModelBuffer,
    pub config: ModelConfig,
    adam: AdamState,
}

impl ModelTrainer {
    pub fn new(model: PredictiveModel, config: ModelConfig) -> Self {
        let adam = AdamState::new(&model.params);
        ModelTrainer {
            buffer: ModelBuffer::new(config.buffer_size),
            model,
            config,
            adam,
        }
    }

    /// Sample a batch, back-propagate through whole episodes, clip, and take
    /// one Adam step.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrainOutcome> {
        if self.buffer.len() < self.config.batch_size {
            return Ok(TrainOutcome::WarmingUp);
        }
        let batch = self.buffer.sample(self.config.batch_size, rng);
        fit(&mut self.model, &mut self.adam, &self.config, &batch)
    }

    /// One optimizer step on a given batch.
    pub fn fit_batch(&mut self, batch: &[&ModelEpisode]) -> Result<TrainOutcome> {
        fit(&mut self.model, &mut self.adam, &self.config, batch)
    }
}

fn fit(
    model: &mut PredictiveModel,
    adam: &mut AdamState,
    config: &ModelConfig,
    batch: &[&ModelEpisode],
) -> Result<TrainOutcome> {
    let (loss, mut grads) = {
        let mut g = Graph::new(&model.params);
        let lv = model.loss_vars(&mut g, batch)?;
        (g.value(lv.total).item()?, g.backward(lv.total)?)
    };
    clip_global_norm(&mut grads, config.grad_clip);
    adam_step(&mut model.params, &grads, adam, config.learning_rate)?;
    Ok(TrainOutcome::Trained { loss })
}
