use std::path::Path;

use rand::Rng;

use super::config::RunConfig;
use super::seeding::{SeedStreams, Stream};
use crate::comms::{shared_view, CommProcess, CommScheme};
use crate::controllers::{Episode, Learner};
use crate::diffcore::checkpoint;
use crate::envs::{Environment, ScenarioSpec};
use crate::error::{Error, Result};
use crate::strategies::{build_exec_input, input_dims, StrategyId, TrainInputBuilder};
use crate::worldmodel::{AgentModelInstance, ModelEpisode, PredictiveModel};

pub const CONTROLLER_CKPT: &str = "controllers.ckpt";
pub const MODEL_CKPT: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.toml";

/// Freshly initialized controllers and (for model strategies) model, built in
/// a fixed order from the init stream so a checkpoint can be loaded into an
/// identical layout.
pub fn build_system(config: &RunConfig) -> Result<(ScenarioSpec, Learner, Option<PredictiveModel>)> {
    let spec = ScenarioSpec::new(config.scenario);
    let mut rng = SeedStreams::new(config.seed).rng(Stream::Init);
    let learner = Learner::new(
        config.algorithm,
        config.controllers.clone(),
        &input_dims(config.strategy, &spec),
        &spec.action_counts,
        spec.joint_dim(),
        &mut rng,
    )?;
    let model = if config.strategy.uses_model() {
        Some(PredictiveModel::new(&spec.obs_dims, config.model.hidden_dim, &mut rng)?)
    } else {
        None
    };
    Ok((spec, learner, model))
}

/// Controllers and model as needed for acting.
#[derive(Clone, Copy)]
pub struct Policy<'a> {
    pub spec: &'a ScenarioSpec,
    pub strategy: StrategyId,
    pub learner: &'a Learner,
    pub model: Option<&'a PredictiveModel>,
}

/// Per-step hook for recording execution-time internals.
pub trait StepObserver {
    fn observe(&mut self, t: usize, env: &dyn Environment, instances: &[AgentModelInstance], reward: f64);
}

impl Policy<'_> {
    /// One execution-time episode with fresh communication draws. Returns the
    /// undiscounted episodic return.
    pub fn run_episode<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        &self,
        env: &mut dyn Environment,
        scheme: CommScheme,
        eps: f64,
        comm_rng: &mut R1,
        act_rng: &mut R2,
        mut observer: Option<&mut dyn StepObserver>,
    ) -> Result<f64> {
        let n = self.spec.n_agents();
        if self.strategy.uses_model() && self.model.is_none() {
            return Err(Error::Protocol(format!("strategy {} needs a predictive model", self.strategy)));
        }
        let mut joint = env.reset();
        let mut comm = CommProcess::begin_episode(scheme, n, comm_rng);
        let mut instances: Vec<AgentModelInstance> = (0..n).map(AgentModelInstance::new).collect();
        if let Some(m) = self.model {
            instances.iter_mut().for_each(|i| i.reset(m));
        }
        let mut hidden = self.learner.initial_hidden();
        let mut ret = 0.0;
        for t in 0.. {
            let mask = comm.mask_at(t, comm_rng);
            let mut inputs = Vec::with_capacity(n);
            for (i, inst) in instances.iter_mut().enumerate() {
                let view = shared_view(&joint, &mask, i)?;
                let imputer = self.model.map(|m| (m, &mut *inst));
                inputs.push(build_exec_input(self.strategy, self.spec, &view, imputer)?);
            }
            let actions = self.learner.act(&inputs, &mut hidden, eps, act_rng)?;
            let res = env.step(&actions)?;
            ret += res.reward;
            if let Some(o) = observer.as_deref_mut() {
                o.observe(t, env, &instances, res.reward);
            }
            joint = res.obs;
            if res.done {
                break;
            }
        }
        Ok(ret)
    }
}

/// A training-time episode and the true observation stream behind it.
pub struct Collected {
    pub episode: Episode,
    pub model_episode: ModelEpisode,
    pub p_drawn: Option<f64>,
}

/// Collects one ε-greedy episode with the strategy's training inputs.
pub fn collect_episode<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    env: &mut dyn Environment,
    policy: &Policy<'_>,
    scheme: CommScheme,
    eps: f64,
    dropout_rng: &mut R1,
    act_rng: &mut R2,
) -> Result<Collected> {
    let n = policy.spec.n_agents();
    let mut joint = env.reset();
    let mut builder = TrainInputBuilder::begin_episode(policy.strategy, policy.spec, scheme, policy.model, dropout_rng)?;
    let mut hidden = policy.learner.initial_hidden();
    let mut ep = Episode {
        inputs: vec![Vec::new(); n],
        actions: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        states: Vec::new(),
        masks: Vec::new(),
    };
    let mut observations = Vec::new();
    for t in 0.. {
        let (inputs, mask) = builder.build(&joint, t, policy.model, dropout_rng)?;
        let state = joint.concat();
        observations.push(state.clone());
        ep.states.push(state);
        ep.masks.push(mask);
        let finished = ep.dones.last().copied().unwrap_or(false);
        if finished {
            for (slot, x) in ep.inputs.iter_mut().zip(inputs) {
                slot.push(x);
            }
            break;
        }
        let actions = policy.learner.act(&inputs, &mut hidden, eps, act_rng)?;
        for (slot, x) in ep.inputs.iter_mut().zip(inputs) {
            slot.push(x);
        }
        let res = env.step(&actions)?;
        ep.actions.push(actions);
        ep.rewards.push(res.reward);
        ep.dones.push(res.done);
        joint = res.obs;
    }
    Ok(Collected {
        model_episode: ModelEpisode::from_observations(&observations),
        p_drawn: builder.p_drawn(),
        episode: ep,
    })
}

/// A trained run read back from its directory.
pub struct LoadedRun {
    pub config: RunConfig,
    pub spec: ScenarioSpec,
    pub learner: Learner,
    pub model: Option<PredictiveModel>,
}

impl LoadedRun {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(CONFIG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let config = RunConfig::parse(&text)?;
        let (spec, mut learner, mut model) = build_system(&config)?;
        checkpoint::load_into(&mut learner.params, &run_dir.join(CONTROLLER_CKPT))?;
        learner.target.copy_from(&learner.params)?;
        if let Some(m) = model.as_mut() {
            checkpoint::load_into(&mut m.params, &run_dir.join(MODEL_CKPT))?;
        }
        Ok(LoadedRun {
            config,
            spec,
            learner,
            model,
        })
    }

    pub fn policy(&self) -> Policy<'_> {
        Policy {
            spec: &self.spec,
            strategy: self.config.strategy,
            learner: &self.learner,
            model: self.model.as_ref(),
        }
    }
}
