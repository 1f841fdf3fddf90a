//! Experiment orchestration: configuration, seeding, training, evaluation
//! and reporting.

mod config;
mod evaluate;
mod gradsuite;
mod outputs;
mod predict;
mod rollout;
mod seeding;
mod train;

pub use config::{effective_scheme, ControllerOverrides, ExperimentConfig, ExperimentSection, ModelOverrides, RunConfig};
pub use evaluate::{
    bootstrap_ci, default_p_grid, evaluate, mean, sweep_p, write_sweep_csv, EvalOptions, EvalReport,
    BOOTSTRAP_RESAMPLES, CI_LEVEL,
};
pub use gradsuite::{gradient_suite, GradCheck, GRAD_TOLERANCE};
pub use outputs::{emit_outputs, find_runs, line_chart_svg, read_curve_csv, Series, SUMMARY_CSV, SWEEP_CSV};
pub use predict::{predict_dump, predict_trajectories, PredictionRecord, PREDICTIONS};
pub use rollout::{
    build_system, collect_episode, Collected, LoadedRun, Policy, StepObserver, CONFIG_FILE, CONTROLLER_CKPT,
    MODEL_CKPT,
};
pub use seeding::{SeedStreams, Stream};
pub use train::{final_eval_seed, train, FinalEval, TrainSummary, EPISODES_LOG, FINAL_EVAL, TRAINING_CURVE, TRAIN_LOG};
