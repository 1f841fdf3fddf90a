use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::effective_scheme;
use super::rollout::Policy;
use super::seeding::{SeedStreams, Stream};
use crate::comms::CommScheme;
use crate::controllers::EVAL_EPSILON;
use crate::envs::make_env;
use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const CI_LEVEL: f64 = 0.95;

/// Mean episodic return with a percentile-bootstrap confidence interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: String,
    pub n: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub returns: Vec<f64>,
}

impl EvalReport {
    pub fn from_returns<R: Rng + ?Sized>(setting: String, returns: Vec<f64>, rng: &mut R) -> Result<Self> {
        let (ci_lo, ci_hi) = bootstrap_ci(&returns, BOOTSTRAP_RESAMPLES, CI_LEVEL, rng)?;
        let mean = mean(&returns);
        Ok(EvalReport {
            setting,
            n: returns.len(),
            mean,
            ci_lo: ci_lo.min(mean),
            ci_hi: ci_hi.max(mean),
            returns,
        })
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }

    pub fn overlaps(&self, other: &EvalReport) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(samples: &[f64], resamples: usize, level: f64, rng: &mut R) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("bootstrap of an empty sample".into()));
    }
    if resamples == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument("bootstrap needs resamples > 0 and level in [0, 1)".into()));
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub rollouts: usize,
    /// Seeds the evaluation environment and communication draws.
    pub seed: u64,
    /// Seeds only the bootstrap resampling.
    pub bootstrap_seed: u64,
}

impl EvalOptions {
    pub fn new(rollouts: usize, seed: u64) -> Self {
        EvalOptions {
            rollouts,
            seed,
            bootstrap_seed: seed,
        }
    }
}

/// Greedy rollouts under `scheme` (forced to full communication for the
/// oracle). Parameters are only read.
pub fn evaluate(policy: &Policy<'_>, scheme: CommScheme, opts: EvalOptions) -> Result<EvalReport> {
    if opts.rollouts == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one rollout".into()));
    }
    let scheme = effective_scheme(policy.strategy, scheme);
    let streams = SeedStreams::new(opts.seed);
    let mut env = make_env(policy.spec.id, streams.seed_for(Stream::EvalEnv));
    let mut comm_rng = streams.rng(Stream::EvalComm);
    let mut act_rng = streams.rng(Stream::Exploration);
    let returns = (0..opts.rollouts)
        .map(|_| policy.run_episode(env.as_mut(), scheme, EVAL_EPSILON, &mut comm_rng, &mut act_rng, None))
        .collect::<Result<Vec<_>>>()?;
    let mut boot = SeedStreams::new(opts.bootstrap_seed).rng(Stream::Bootstrap);
    EvalReport::from_returns(scheme.to_string(), returns, &mut boot)
}

pub fn default_p_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// One report per communication level.
pub fn sweep_p(policy: &Policy<'_>, grid: &[f64], opts: EvalOptions) -> Result<Vec<(f64, EvalReport)>> {
    grid.iter()
        .map(|&p| Ok((p, evaluate(policy, CommScheme::fixed(p)?, opts)?)))
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[(f64, EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["p", "mean", "ci_lo", "ci_hi"]).map_err(|e| csv_error(path, e))?;
    for (p, r) in rows {
        w.write_record([p.to_string(), r.mean.to_string(), r.ci_lo.to_string(), r.ci_hi.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn degenerate_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(bootstrap_ci(&[2.5; 7], 1000, 0.95, &mut rng).unwrap(), (2.5, 2.5));
        assert_eq!(bootstrap_ci(&[-3.0], 1000, 0.95, &mut rng).unwrap(), (-3.0, -3.0));
        assert!(bootstrap_ci(&[], 1000, 0.95, &mut rng).is_err());
    }

    #[test]
    fn normal_theory_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..100).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let (lo, hi) = bootstrap_ci(&xs, BOOTSTRAP_RESAMPLES, CI_LEVEL, &mut rng).unwrap();
        let expected = 2.0 * 1.96 / 10.0;
        assert!(((hi - lo) / expected - 1.0).abs() < 0.3, "{}", hi - lo);
    }

    #[test]
    fn grid_has_eleven_points() {
        let g = default_p_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
    }
}
