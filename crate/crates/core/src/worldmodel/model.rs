use rand::Rng;

use super::ModelEpisode;
use crate::diffcore::{gaussian_nll_elements, Graph, Linear, LstmCell, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 4.0;

/// Recurrent Gaussian predictor of next-step observation deltas.
///
/// A shared LSTM trunk reads the concatenated joint observation; one linear
/// head per agent maps the new hidden state to the mean and log-variance of
/// that agent's delta.
#[derive(Clone, Debug)]
pub struct PredictiveModel {
    obs_dims: Vec<usize>,
    offsets: Vec<usize>,
    hidden: usize,
    pub params: ParamStore,
    lstm: LstmCell,
    heads: Vec<Linear>,
}

/// Recurrent state `(h, c)` for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub h: Tensor,
    pub c: Tensor,
}

impl ModelState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        ModelState {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.h.data().iter().chain(self.c.data()).all(|&v| v == 0.0)
    }
}

/// Graph handles produced by one recurrent step.
pub struct StepVars {
    pub means: Vec<Var>,
    pub logvars: Vec<Var>,
    pub h: Var,
    pub c: Var,
}

/// Loss handles for a batch of episodes.
pub struct LossVars {
    /// Mean over valid `(episode, t)` pairs of the summed per-agent NLL.
    pub total: Var,
    /// Per-agent contributions; they sum to `total`.
    pub per_agent: Vec<Var>,
    pub valid_steps: usize,
}

impl PredictiveModel {
    pub fn new<R: Rng + ?Sized>(obs_dims: &[usize], hidden: usize, rng: &mut R) -> Result<Self> {
        let joint: usize = obs_dims.iter().sum();
        let mut params = ParamStore::new();
        let lstm = LstmCell::new(&mut params, "model.lstm", joint, hidden, rng)?;
        let heads = obs_dims
            .iter()
            .enumerate()
            .map(|(i, &d)| Linear::new(&mut params, &format!("model.head{i}"), hidden, 2 * d, rng))
            .collect::<Result<Vec<_>>>()?;
        let offsets = obs_dims
            .iter()
            .scan(0, |acc, &d| {
                let s = *acc;
                *acc += d;
                Some(s)
            })
            .collect();
        Ok(PredictiveModel {
            obs_dims: obs_dims.to_vec(),
            offsets,
            hidden,
            params,
            lstm,
            heads,
        })
    }

    pub fn obs_dims(&self) -> &[usize] {
        &self.obs_dims
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn joint_dim(&self) -> usize {
        self.obs_dims.iter().sum()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn zero_state(&self, batch: usize) -> ModelState {
        ModelState::zeros(batch, self.hidden)
    }

    /// One recurrent step on a `[b × joint_dim]` input. The graph must be bound
    /// to this model's parameters.
    pub fn forward_vars(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Var) -> Result<StepVars> {
        let width = g.value(x).cols();
        if width != self.joint_dim() {
            return Err(Error::shape("model_forward", self.joint_dim(), width));
        }
        let (h, c) = self.lstm.forward(g, x, h, c)?;
        let mut means = Vec::with_capacity(self.heads.len());
        let mut logvars = Vec::with_capacity(self.heads.len());
        for (head, &d) in self.heads.iter().zip(&self.obs_dims) {
            let out = head.forward(g, h)?;
            means.push(g.slice_cols(out, 0, d)?);
            let raw = g.slice_cols(out, d, d)?;
            logvars.push(g.clamp(raw, LOGVAR_MIN, LOGVAR_MAX));
        }
        Ok(StepVars { means, logvars, h, c })
    }

    /// Point prediction for one joint observation: returns the predicted
    /// deltas (concatenated in agent order) and advances `state`.
    pub fn predict_delta(&self, obs: &[f64], state: &mut ModelState) -> Result<Vec<f64>> {
        if obs.len() != self.joint_dim() {
            return Err(Error::shape("model_forward", self.joint_dim(), obs.len()));
        }
        let mut g = Graph::new(&self.params);
        let x = g.constant(Tensor::row_vector(obs));
        let h = g.constant(state.h.clone());
        let c = g.constant(state.c.clone());
        let out = self.forward_vars(&mut g, x, h, c)?;
        let mut mu = Vec::with_capacity(obs.len());
        for &m in &out.means {
            mu.extend_from_slice(g.value(m).data());
        }
        state.h = g.value(out.h).clone();
        state.c = g.value(out.c).clone();
        Ok(mu)
    }

    /// Next-step estimate `o + μ`, advancing `state`.
    pub fn predict_next(&self, obs: &[f64], state: &mut ModelState) -> Result<Vec<f64>> {
        let mu = self.predict_delta(obs, state)?;
        Ok(obs.iter().zip(&mu).map(|(o, d)| o + d).collect())
    }

    /// Negative log-likelihood of the stored deltas under the model, run from
    /// a zero state through each episode (padded to the longest one).
    pub fn loss_vars(&self, g: &mut Graph<'_>, episodes: &[&ModelEpisode]) -> Result<LossVars> {
        let batch = episodes.len();
        if batch == 0 {
            return Err(Error::InvalidArgument("model loss on an empty batch".into()));
        }
        let dim = self.joint_dim();
        for ep in episodes {
            ep.validate(dim)?;
        }
        let horizon = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        let valid_steps: usize = episodes.iter().map(|e| e.len()).sum();
        if valid_steps == 0 {
            return Err(Error::InvalidArgument("model loss on empty episodes".into()));
        }

        let mut h = g.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut c = g.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut per_agent_terms: Vec<Vec<Var>> = vec![Vec::new(); self.obs_dims.len()];
        for t in 0..horizon {
            let mut x = vec![0.0; batch * dim];
            let mut y = vec![0.0; batch * dim];
            let mut valid = vec![0.0; batch];
            for (b, ep) in episodes.iter().enumerate() {
                if t < ep.len() {
                    x[b * dim..(b + 1) * dim].copy_from_slice(&ep.obs[t]);
                    y[b * dim..(b + 1) * dim].copy_from_slice(&ep.deltas[t]);
                    valid[b] = 1.0;
                }
            }
            let xv = g.constant(Tensor::new(&[batch, dim], x)?);
            let step = self.forward_vars(g, xv, h, c)?;
            h = step.h;
            c = step.c;
            let all_valid = valid.iter().all(|&v| v == 1.0);
            let target = Tensor::new(&[batch, dim], y)?;
            for (i, (&off, &d)) in self.offsets.iter().zip(&self.obs_dims).enumerate() {
                let mut ty = Vec::with_capacity(batch * d);
                for b in 0..batch {
                    ty.extend_from_slice(&target.row(b)[off..off + d]);
                }
                let tv = g.constant(Tensor::new(&[batch, d], ty)?);
                let mut elems = gaussian_nll_elements(g, step.means[i], step.logvars[i], tv)?;
                if !all_valid {
                    let mut m = Vec::with_capacity(batch * d);
                    for &v in &valid {
                        m.extend(std::iter::repeat_n(v, d));
                    }
                    let mv = g.constant(Tensor::new(&[batch, d], m)?);
                    elems = g.mul(elems, mv)?;
                }
                per_agent_terms[i].push(g.sum(elems));
            }
        }
        let norm = 1.0 / valid_steps as f64;
        let mut per_agent = Vec::with_capacity(per_agent_terms.len());
        for terms in per_agent_terms {
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = g.add(acc, t)?;
            }
            per_agent.push(g.scale(acc, norm));
        }
        let mut total = per_agent[0];
        for &p in &per_agent[1..] {
            total = g.add(total, p)?;
        }
        Ok(LossVars {
            total,
            per_agent,
            valid_steps,
        })
    }

    /// Scalar loss value for `episodes` (no gradient).
    pub fn loss(&self, episodes: &[&ModelEpisode]) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let l = self.loss_vars(&mut g, episodes)?;
        g.value(l.total).item()
    }

    /// Mean absolute error `|μ − Δ|` per dimension over the episodes.
    pub fn mean_abs_delta_error(&self, episodes: &[&ModelEpisode]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for ep in episodes {
            let mut state = self.zero_state(1);
            for (o, d) in ep.obs.iter().zip(&ep.deltas) {
                let mu = self.predict_delta(o, &mut state)?;
                total += mu.iter().zip(d).map(|(a, b)| (a - b).abs()).sum::<f64>();
                count += d.len();
            }
        }
        Ok(total / count.max(1) as f64)
    }
}
