use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comms::CommScheme;
use crate::controllers::{Algorithm, ControllerConfig};
use crate::envs::ScenarioId;
use crate::error::{Error, Result};
use crate::strategies::StrategyId;
use crate::worldmodel::ModelConfig;

/// Experiment file as written by the user. Every hyperparameter is optional
/// and falls back to the scenario/algorithm default.
///
/// ```toml
/// [experiment]
/// scenario = "hs"
/// algorithm = "iql"
/// strategy = "maro"
/// total_steps = 200000
/// seeds = [0, 1, 2]
/// output_dir = "runs/hs-iql-maro"
///
/// [controllers]
/// hidden_dim = 64
///
/// [model]
/// hidden_dim = 128
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub controllers: ControllerOverrides,
    #[serde(default)]
    pub model: ModelOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: ScenarioId,
    pub algorithm: Algorithm,
    pub strategy: StrategyId,
    #[serde(default = "defaults::total_steps")]
    pub total_steps: u64,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    /// Scheme for training-time dropout draws.
    #[serde(default = "defaults::comm")]
    pub train_comm: CommScheme,
    /// Scheme for evaluation rollouts.
    #[serde(default = "defaults::comm")]
    pub eval_comm: CommScheme,
    #[serde(default = "defaults::eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "defaults::eval_rollouts")]
    pub eval_rollouts: usize,
    #[serde(default = "defaults::final_rollouts")]
    pub final_rollouts: usize,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerOverrides {
    pub hidden_dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub reward_standardisation: Option<bool>,
    pub epsilon_start: Option<f64>,
    pub epsilon_finish: Option<f64>,
    pub epsilon_anneal: Option<u64>,
    pub target_update: Option<u64>,
    pub gamma: Option<f64>,
    pub buffer_size: Option<usize>,
    pub batch_size: Option<usize>,
    pub grad_clip: Option<f64>,
    pub mixer_embed: Option<usize>,
    pub hypernet_hidden: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub hidden_dim: Option<usize>,
    pub learning_rate: Option<f64>,
    pub grad_clip: Option<f64>,
    pub buffer_size: Option<usize>,
    pub batch_size: Option<usize>,
}

mod defaults {
    use std::path::PathBuf;

    use crate::comms::CommScheme;

    pub fn total_steps() -> u64 {
        200_000
    }
    pub fn seeds() -> Vec<u64> {
        vec![0, 1, 2]
    }
    pub fn comm() -> CommScheme {
        CommScheme::DefaultUniform
    }
    pub fn eval_interval() -> u64 {
        10_000
    }
    pub fn eval_rollouts() -> usize {
        20
    }
    pub fn final_rollouts() -> usize {
        100
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("runs")
    }
}

/// Fully resolved settings for one seed. This is what a run directory stores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioId,
    pub algorithm: Algorithm,
    pub strategy: StrategyId,
    pub seed: u64,
    pub total_steps: u64,
    pub train_comm: CommScheme,
    pub eval_comm: CommScheme,
    pub eval_interval: u64,
    pub eval_rollouts: usize,
    pub final_rollouts: usize,
    pub controllers: ControllerConfig,
    pub model: ModelConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Directory for one seed's outputs.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.experiment.output_dir.join(format!("seed{seed}"))
    }

    pub fn resolve(&self, seed: u64) -> Result<RunConfig> {
        let e = &self.experiment;
        let mut c = ControllerConfig::defaults(e.algorithm, e.scenario);
        let o = &self.controllers;
        macro_rules! apply {
            ($dst:ident, $src:ident, $($f:ident),*) => {
                $(if let Some(v) = $src.$f { $dst.$f = v; })*
            };
        }
        apply!(c, o, hidden_dim, learning_rate, reward_standardisation, epsilon_start, epsilon_finish);
        apply!(c, o, epsilon_anneal, target_update, gamma, buffer_size, batch_size, mixer_embed, hypernet_hidden);
        if o.grad_clip.is_some() {
            c.grad_clip = o.grad_clip;
        }
        let mut m = ModelConfig::default();
        let mo = &self.model;
        apply!(m, mo, hidden_dim, learning_rate, grad_clip, buffer_size, batch_size);
        let run = RunConfig {
            scenario: e.scenario,
            algorithm: e.algorithm,
            strategy: e.strategy,
            seed,
            total_steps: e.total_steps,
            train_comm: e.train_comm,
            eval_comm: e.eval_comm,
            eval_interval: e.eval_interval,
            eval_rollouts: e.eval_rollouts,
            final_rollouts: e.final_rollouts,
            controllers: c,
            model: m,
        };
        run.validate()?;
        Ok(run)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.controllers;
        let m = &self.model;
        let checks: [(bool, &str); 14] = [
            (self.total_steps > 0, "total_steps must be positive"),
            (self.eval_interval > 0, "eval_interval must be positive"),
            (self.eval_rollouts > 0 && self.final_rollouts > 0, "rollout counts must be positive"),
            (c.hidden_dim > 0 && m.hidden_dim > 0, "hidden_dim must be positive"),
            (c.learning_rate > 0.0 && m.learning_rate > 0.0, "learning_rate must be positive"),
            ((0.0..=1.0).contains(&c.epsilon_start), "epsilon_start outside [0, 1]"),
            ((0.0..=1.0).contains(&c.epsilon_finish), "epsilon_finish outside [0, 1]"),
            (c.target_update > 0, "target_update must be positive"),
            ((0.0..=1.0).contains(&c.gamma), "gamma outside [0, 1]"),
            (c.batch_size > 0 && m.batch_size > 0, "batch_size must be positive"),
            (c.buffer_size >= c.batch_size, "controller buffer_size below batch_size"),
            (m.buffer_size >= m.batch_size, "model buffer_size below batch_size"),
            (c.grad_clip.is_none_or(|g| g > 0.0) && m.grad_clip > 0.0, "grad_clip must be positive"),
            (c.mixer_embed > 0 && c.hypernet_hidden > 0, "mixer sizes must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).to_string())),
            None => Ok(()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let run: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        run.validate()?;
        Ok(run)
    }

    /// Evaluation scheme actually used: the oracle only ever sees full
    /// communication.
    pub fn effective_scheme(&self, requested: CommScheme) -> CommScheme {
        effective_scheme(self.strategy, requested)
    }
}

pub fn effective_scheme(strategy: StrategyId, requested: CommScheme) -> CommScheme {
    if strategy == StrategyId::Oracle {
        CommScheme::Fixed(1.0)
    } else {
        requested
    }
}
