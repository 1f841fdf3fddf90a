//! `hmarl` command-line driver.
//!
//! Every subcommand prints JSON lines on stdout. Failures print a single
//! `{"error": {"kind": ..., "message": ...}}` line on stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmarl::comms::CommScheme;
use hmarl::harness::{
    default_p_grid, emit_outputs, evaluate, final_eval_seed, gradient_suite, predict_dump, sweep_p, train,
    write_sweep_csv, EvalOptions, ExperimentConfig, LoadedRun, SWEEP_CSV,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hmarl", version, about = "Hybrid-execution multi-agent RL workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed (or every seed listed in the config).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a run under one communication scheme.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// `fixed:<p>`, `default`, `asymmetric` or `dynamic:<k>`.
        #[arg(long, default_value = "default")]
        comm: CommScheme,
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a run at p = 0.0, 0.1, ..., 1.0 and write sweep_p.csv.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference check of every differentiable building block.
    Gradcheck,
    /// Write auto-regressive model rollouts next to the true trajectory.
    PredictDump {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
    },
    /// Render SVG charts and summary.csv for a run or a directory of runs.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

fn run(cmd: Command) -> hmarl::Result<bool> {
    match cmd {
        Command::Train { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seeds = match seed {
                Some(s) => vec![s],
                None => cfg.experiment.seeds.clone(),
            };
            for s in seeds {
                let run_cfg = cfg.resolve(s)?;
                let summary = train(&run_cfg, &cfg.run_dir(s))?;
                let r = &summary.final_eval;
                println!(
                    "{}",
                    json!({
                        "run_dir": summary.run_dir,
                        "seed": s,
                        "env_steps": summary.env_steps,
                        "episodes": summary.episodes,
                        "setting": r.setting,
                        "mean": r.mean,
                        "ci_lo": r.ci_lo,
                        "ci_hi": r.ci_hi,
                    })
                );
            }
            Ok(true)
        }
        Command::Eval {
            ckpt,
            comm,
            rollouts,
            seed,
        } => {
            let loaded = LoadedRun::load(&ckpt)?;
            let seed = seed.unwrap_or_else(|| final_eval_seed(loaded.config.seed));
            let r = evaluate(&loaded.policy(), comm, EvalOptions::new(rollouts, seed))?;
            println!(
                "{}",
                json!({"setting": r.setting, "n": r.n, "mean": r.mean, "ci_lo": r.ci_lo, "ci_hi": r.ci_hi})
            );
            Ok(true)
        }
        Command::Sweep { ckpt, rollouts, seed } => {
            let loaded = LoadedRun::load(&ckpt)?;
            let seed = seed.unwrap_or_else(|| final_eval_seed(loaded.config.seed));
            let rows = sweep_p(&loaded.policy(), &default_p_grid(), EvalOptions::new(rollouts, seed))?;
            write_sweep_csv(&ckpt.join(SWEEP_CSV), &rows)?;
            for (p, r) in &rows {
                println!(
                    "{}",
                    json!({"p": p, "setting": r.setting, "n": r.n, "mean": r.mean, "ci_lo": r.ci_lo, "ci_hi": r.ci_hi})
                );
            }
            Ok(true)
        }
        Command::Gradcheck => {
            let results = gradient_suite()?;
            for c in &results {
                println!(
                    "{}",
                    json!({
                        "op": c.name,
                        "instances": c.instances,
                        "max_relative_error": c.max_relative_error,
                        "tolerance": c.tolerance,
                        "passed": c.passed(),
                    })
                );
            }
            Ok(results.iter().all(|c| c.passed()))
        }
        Command::PredictDump { ckpt, horizon } => {
            let path = predict_dump(&ckpt, horizon)?;
            println!("{}", json!({ "written": path }));
            Ok(true)
        }
        Command::Plot { run } => {
            for path in emit_outputs(&run)? {
                println!("{}", json!({ "written": path }));
            }
            Ok(true)
        }
    }
}

fn error_line(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            error_line("usage", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            error_line("gradcheck", "finite-difference check exceeded tolerance");
            ExitCode::FAILURE
        }
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
