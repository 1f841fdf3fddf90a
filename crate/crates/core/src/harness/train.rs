use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::evaluate::{csv_error, evaluate, EvalOptions, EvalReport};
use super::rollout::{build_system, collect_episode, Policy, CONFIG_FILE, CONTROLLER_CKPT, MODEL_CKPT};
use super::seeding::{SeedStreams, Stream};
use crate::controllers::{EpisodeReplay, RewardStandardizer};
use crate::diffcore::checkpoint;
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::worldmodel::{ModelTrainer, TrainOutcome};

pub const TRAINING_CURVE: &str = "training_curve.csv";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const EPISODES_LOG: &str = "episodes.jsonl";
pub const FINAL_EVAL: &str = "final_eval.json";

/// One line of `episodes.jsonl`.
#[derive(Serialize)]
struct EpisodeRecord {
    episode: u64,
    seed: u64,
    p_drawn: Option<f64>,
    #[serde(rename = "return")]
    ret: f64,
}

/// Contents of `final_eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct FinalEval {
    pub scenario: String,
    pub algorithm: String,
    pub strategy: String,
    pub seed: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub report: EvalReport,
}

/// What `train` produced.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub env_steps: u64,
    pub episodes: u64,
    pub final_eval: EvalReport,
}

struct Running {
    sum: f64,
    count: u64,
}

impl Running {
    fn new() -> Self {
        Running { sum: 0.0, count: 0 }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    /// Mean since the last take, or empty.
    fn take(&mut self) -> String {
        let out = if self.count == 0 {
            String::new()
        } else {
            (self.sum / self.count as f64).to_string()
        };
        *self = Running::new();
        out
    }
}

/// Trains one seed and writes its run directory:
/// `config.toml`, checkpoints, `training_curve.csv`, `train_log.csv`,
/// `episodes.jsonl` and `final_eval.json`.
pub fn train(config: &RunConfig, run_dir: &Path) -> Result<TrainSummary> {
    config.validate()?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let cfg_path = run_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, config.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;

    let streams = SeedStreams::new(config.seed);
    let (spec, mut learner, model) = build_system(config)?;
    let mut trainer = model.map(|m| ModelTrainer::new(m, config.model.clone()));
    let mut env = make_env(config.scenario, streams.seed_for(Stream::Env));
    let mut explore_rng = streams.rng(Stream::Exploration);
    let mut dropout_rng = streams.rng(Stream::Dropout);
    let mut replay_rng = streams.rng(Stream::Replay);
    let mut model_rng = streams.rng(Stream::Model);
    let eval_seeds = SeedStreams::new(streams.seed_for(Stream::EvalEnv));
    let mut eval_seed_rng = eval_seeds.rng(Stream::EvalEnv);

    let mut replay = EpisodeReplay::new(config.controllers.buffer_size);
    let mut stats = RewardStandardizer::default();
    let schedule = config.controllers.epsilon();

    let curve_path = run_dir.join(TRAINING_CURVE);
    let mut curve = csv::Writer::from_path(&curve_path).map_err(|e| csv_error(&curve_path, e))?;
    curve
        .write_record(["step", "return", "ci_lo", "ci_hi"])
        .map_err(|e| csv_error(&curve_path, e))?;
    let log_path = run_dir.join(TRAIN_LOG);
    let mut log = csv::Writer::from_path(&log_path).map_err(|e| csv_error(&log_path, e))?;
    log.write_record(["step", "episodes", "epsilon", "td_loss", "model_loss", "train_return"])
        .map_err(|e| csv_error(&log_path, e))?;
    let ep_path = run_dir.join(EPISODES_LOG);
    let mut ep_log = std::io::BufWriter::new(fs::File::create(&ep_path).map_err(|e| Error::io(&ep_path, e))?);

    let mut env_steps = 0u64;
    let mut episodes = 0u64;
    let mut next_eval = config.eval_interval;
    let (mut td, mut ml, mut rets) = (Running::new(), Running::new(), Running::new());

    while env_steps < config.total_steps {
        let eps = schedule.value(env_steps);
        let collected = {
            let policy = Policy {
                spec: &spec,
                strategy: config.strategy,
                learner: &learner,
                model: trainer.as_ref().map(|t| &t.model),
            };
            collect_episode(env.as_mut(), &policy, config.train_comm, eps, &mut dropout_rng, &mut explore_rng)?
        };
        let ep_return = collected.episode.episode_return();
        env_steps += collected.episode.len() as u64;
        episodes += 1;
        collected.episode.rewards.iter().for_each(|&r| stats.update(r));
        replay.push(collected.episode);
        if let Some(t) = trainer.as_mut() {
            t.buffer.push(collected.model_episode);
        }
        if replay.can_sample(config.controllers.batch_size) {
            let batch = replay.sample(config.controllers.batch_size, &mut replay_rng);
            td.push(learner.train(&batch, &stats)?.loss);
            if let Some(t) = trainer.as_mut() {
                if let TrainOutcome::Trained { loss } = t.train_step(&mut model_rng)? {
                    ml.push(loss);
                }
            }
        }
        rets.push(ep_return);
        let record = EpisodeRecord {
            episode: episodes,
            seed: config.seed,
            p_drawn: collected.p_drawn,
            ret: ep_return,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(ep_log, "{line}").map_err(|e| Error::io(&ep_path, e))?;

        if env_steps >= next_eval || env_steps >= config.total_steps {
            next_eval += config.eval_interval;
            let policy = Policy {
                spec: &spec,
                strategy: config.strategy,
                learner: &learner,
                model: trainer.as_ref().map(|t| &t.model),
            };
            let opts = EvalOptions::new(config.eval_rollouts, rand::Rng::random(&mut eval_seed_rng));
            let r = evaluate(&policy, config.eval_comm, opts)?;
            curve
                .write_record([env_steps.to_string(), r.mean.to_string(), r.ci_lo.to_string(), r.ci_hi.to_string()])
                .map_err(|e| csv_error(&curve_path, e))?;
            log.write_record([
                env_steps.to_string(),
                episodes.to_string(),
                schedule.value(env_steps).to_string(),
                td.take(),
                ml.take(),
                rets.take(),
            ])
            .map_err(|e| csv_error(&log_path, e))?;
        }
    }
    curve.flush().map_err(|e| Error::io(&curve_path, e))?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    ep_log.flush().map_err(|e| Error::io(&ep_path, e))?;

    checkpoint::save(&learner.params, &run_dir.join(CONTROLLER_CKPT))?;
    if let Some(t) = &trainer {
        checkpoint::save(&t.model.params, &run_dir.join(MODEL_CKPT))?;
    }

    let policy = Policy {
        spec: &spec,
        strategy: config.strategy,
        learner: &learner,
        model: trainer.as_ref().map(|t| &t.model),
    };
    let final_eval = evaluate(&policy, config.eval_comm, EvalOptions::new(config.final_rollouts, final_eval_seed(config.seed)))?;
    let record = FinalEval {
        scenario: config.scenario.to_string(),
        algorithm: config.algorithm.to_string(),
        strategy: config.strategy.to_string(),
        seed: config.seed,
        env_steps,
        episodes,
        report: final_eval.clone(),
    };
    let path = run_dir.join(FINAL_EVAL);
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    Ok(TrainSummary {
        run_dir: run_dir.to_path_buf(),
        env_steps,
        episodes,
        final_eval,
    })
}

/// Evaluation seed used for a run's final report, so later evaluations of the
/// same checkpoint can reproduce it.
pub fn final_eval_seed(seed: u64) -> u64 {
    SeedStreams::new(seed).seed_for(Stream::EvalComm)
}
