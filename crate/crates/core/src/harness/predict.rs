use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::rollout::{LoadedRun, StepObserver};
use super::seeding::{SeedStreams, Stream};
use crate::comms::CommScheme;
use crate::controllers::EVAL_EPSILON;
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::worldmodel::{AgentModelInstance, PredictiveModel};

pub const PREDICTIONS: &str = "predictions.jsonl";

/// One predicted joint observation `k` steps past step `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub t: usize,
    pub k: usize,
    pub agent: usize,
    pub predicted: Vec<f64>,
    /// The true joint observation at `t + k`, if the episode got that far.
    pub actual: Option<Vec<f64>>,
}

struct Recorder<'a> {
    model: &'a PredictiveModel,
    agent: usize,
    horizon: usize,
    /// `o_{t+1}` for each step.
    truth: Vec<Vec<f64>>,
    rollouts: Vec<Result<Vec<Vec<f64>>>>,
}

impl StepObserver for Recorder<'_> {
    fn observe(&mut self, _t: usize, env: &dyn Environment, instances: &[AgentModelInstance], _reward: f64) {
        self.truth.push(env.joint_observation().concat());
        self.rollouts.push(instances[self.agent].rollout(self.model, self.horizon));
    }
}

/// Runs `episodes` greedy episodes of a model-based run and records, at
/// every step, the given agent's `horizon`-step auto-regressive rollout next
/// to the true future observations.
pub fn predict_trajectories(
    run: &LoadedRun,
    scheme: CommScheme,
    horizon: usize,
    episodes: usize,
    agent: usize,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    let model = run
        .model
        .as_ref()
        .ok_or_else(|| Error::Checkpoint(format!("strategy {} has no predictive model", run.config.strategy)))?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let n = run.spec.n_agents();
    if agent >= n {
        return Err(Error::AgentIndex { index: agent, n });
    }
    let streams = SeedStreams::new(seed);
    let mut env = make_env(run.spec.id, streams.seed_for(Stream::EvalEnv));
    let mut comm_rng = streams.rng(Stream::EvalComm);
    let mut act_rng = streams.rng(Stream::Exploration);
    let policy = run.policy();
    let mut out = Vec::new();
    for _ in 0..episodes {
        let mut rec = Recorder {
            model,
            agent,
            horizon,
            truth: Vec::new(),
            rollouts: Vec::new(),
        };
        policy.run_episode(env.as_mut(), scheme, EVAL_EPSILON, &mut comm_rng, &mut act_rng, Some(&mut rec))?;
        for (t, traj) in rec.rollouts.into_iter().enumerate() {
            for (k, predicted) in traj?.into_iter().enumerate() {
                out.push(PredictionRecord {
                    t,
                    k: k + 1,
                    agent,
                    predicted,
                    actual: rec.truth.get(t + k).cloned(),
                });
            }
        }
    }
    Ok(out)
}

/// Writes one episode of `horizon`-step predictions to `predictions.jsonl`
/// in the run directory.
pub fn predict_dump(run_dir: &Path, horizon: usize) -> Result<PathBuf> {
    let run = LoadedRun::load(run_dir)?;
    let records = predict_trajectories(&run, CommScheme::Fixed(1.0), horizon, 1, 0, run.config.seed)?;
    let path = run_dir.join(PREDICTIONS);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    for r in &records {
        let line = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    f.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
