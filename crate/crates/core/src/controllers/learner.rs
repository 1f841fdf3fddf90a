use rand::Rng;

use super::{argmax, select_action, Algorithm, ControllerConfig, Episode, QMixer, RecurrentQNet, RewardStandardizer};
use crate::diffcore::{adam_step, clip_global_norm, AdamState, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Online and target parameters for every agent network (and the mixer under
/// QMIX), plus the optimizer that updates them.
#[derive(Clone, Debug)]
pub struct Learner {
    pub algorithm: Algorithm,
    pub config: ControllerConfig,
    pub params: ParamStore,
    pub target: ParamStore,
    pub nets: Vec<RecurrentQNet>,
    pub mixer: Option<QMixer>,
    adam: AdamState,
    train_steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainBatchStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub target_updated: bool,
}

/// Time-major padded view of a batch.
struct Padded {
    batch: usize,
    horizon: usize,
    /// `[t][b]`: 1 for real steps.
    valid: Vec<Vec<f64>>,
    any_padding: bool,
}

impl Padded {
    fn new(batch: &[&Episode]) -> Self {
        let horizon = batch.iter().map(|e| e.len()).max().unwrap_or(0);
        let valid: Vec<Vec<f64>> = (0..horizon)
            .map(|t| batch.iter().map(|e| if t < e.len() { 1.0 } else { 0.0 }).collect())
            .collect();
        let any_padding = batch.iter().any(|e| e.len() != horizon);
        Padded {
            batch: batch.len(),
            horizon,
            valid,
            any_padding,
        }
    }
}

fn gather_rows(batch: &[&Episode], t: usize, dim: usize, row: impl Fn(&Episode, usize) -> Option<&[f64]>) -> Result<Tensor> {
    let mut data = vec![0.0; batch.len() * dim];
    for (b, ep) in batch.iter().enumerate() {
        if let Some(r) = row(ep, t) {
            if r.len() != dim {
                return Err(Error::shape("replay_batch", dim, r.len()));
            }
            data[b * dim..(b + 1) * dim].copy_from_slice(r);
        }
    }
    Tensor::new(&[batch.len(), dim], data)
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(
        algorithm: Algorithm,
        config: ControllerConfig,
        input_dims: &[usize],
        action_counts: &[usize],
        state_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dims.len() != action_counts.len() || input_dims.is_empty() {
            return Err(Error::shape("learner", input_dims.len(), action_counts.len()));
        }
        let mut params = ParamStore::new();
        let nets = input_dims
            .iter()
            .zip(action_counts)
            .enumerate()
            .map(|(k, (&d, &a))| RecurrentQNet::new(&mut params, &format!("agent{k}"), d, config.hidden_dim, a, rng))
            .collect::<Result<Vec<_>>>()?;
        let mixer = match algorithm {
            Algorithm::Iql => None,
            Algorithm::Qmix => Some(QMixer::new(
                &mut params,
                nets.len(),
                state_dim,
                config.mixer_embed,
                config.hypernet_hidden,
                rng,
            )?),
        };
        let adam = AdamState::new(&params);
        Ok(Learner {
            algorithm,
            config,
            target: params.clone(),
            params,
            nets,
            mixer,
            adam,
            train_steps: 0,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.nets.len()
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Fresh per-agent hidden rows for acting.
    pub fn initial_hidden(&self) -> Vec<Tensor> {
        self.nets.iter().map(|n| Tensor::zeros(&[1, n.hidden()])).collect()
    }

    /// Online Q-values of one agent, advancing its hidden row.
    pub fn q_values(&self, agent: usize, input: &[f64], hidden: &mut Tensor) -> Result<Vec<f64>> {
        let net = self.nets.get(agent).ok_or(Error::AgentIndex {
            index: agent,
            n: self.nets.len(),
        })?;
        net.act_step(&self.params, input, hidden)
    }

    /// ε-greedy joint action.
    pub fn act<R: Rng + ?Sized>(
        &self,
        inputs: &[Vec<f64>],
        hidden: &mut [Tensor],
        eps: f64,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if inputs.len() != self.nets.len() || hidden.len() != self.nets.len() {
            return Err(Error::shape("act", self.nets.len(), inputs.len()));
        }
        let mut actions = Vec::with_capacity(inputs.len());
        for (i, (x, h)) in inputs.iter().zip(hidden.iter_mut()).enumerate() {
            let q = self.q_values(i, x, h)?;
            actions.push(select_action(&q, eps, rng)?);
        }
        Ok(actions)
    }

    /// Copies online parameters into the target every `target_update` steps.
    pub fn maybe_update_target(&mut self, train_step_count: u64) -> bool {
        let period = self.config.target_update.max(1);
        if train_step_count > 0 && train_step_count % period == 0 {
            self.target.copy_from(&self.params).expect("identical layouts");
            true
        } else {
            false
        }
    }

    fn unroll(&self, g: &mut Graph<'_>, batch: &[&Episode], agent: usize, steps: usize) -> Result<Vec<Var>> {
        let net = &self.nets[agent];
        let dim = net.input_dim();
        let mut h = g.constant(Tensor::zeros(&[batch.len(), net.hidden()]));
        let mut qs = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = gather_rows(batch, t, dim, |e, t| e.inputs[agent].get(t).map(|v| v.as_slice()))?;
            let x = g.constant(x);
            let (q, h2) = net.forward(g, x, h)?;
            h = h2;
            qs.push(q);
        }
        Ok(qs)
    }

    fn rewards(&self, batch: &[&Episode], t: usize, stats: &RewardStandardizer) -> Vec<f64> {
        batch
            .iter()
            .map(|e| match e.rewards.get(t) {
                Some(&r) if self.config.reward_standardisation => stats.standardize(r),
                Some(&r) => r,
                None => 0.0,
            })
            .collect()
    }

    /// `max_a Q_target` per agent at every step `0..=T`, `[agent][t][b]`.
    fn target_max(&self, batch: &[&Episode], horizon: usize) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut g = Graph::new(&self.target);
        let mut out = Vec::with_capacity(self.nets.len());
        for i in 0..self.nets.len() {
            let qs = self.unroll(&mut g, batch, i, horizon + 1)?;
            out.push(
                qs.iter()
                    .map(|&q| {
                        let t = g.value(q);
                        (0..t.rows()).map(|r| t.row(r)[argmax(t.row(r)).unwrap()]).collect()
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    /// TD targets `[t][b]` shared by every agent under QMIX, or one set per
    /// agent under IQL.
    fn td_targets(&self, batch: &[&Episode], pad: &Padded, stats: &RewardStandardizer) -> Result<Vec<Vec<Vec<f64>>>> {
        let maxq = self.target_max(batch, pad.horizon)?;
        let gamma = self.config.gamma;
        let cont = |t: usize| -> Vec<f64> {
            batch
                .iter()
                .map(|e| match e.dones.get(t) {
                    Some(true) | None => 0.0,
                    Some(false) => 1.0,
                })
                .collect()
        };
        match &self.mixer {
            None => Ok(maxq
                .iter()
                .map(|per_t| {
                    (0..pad.horizon)
                        .map(|t| {
                            let r = self.rewards(batch, t, stats);
                            let c = cont(t);
                            (0..pad.batch).map(|b| r[b] + gamma * c[b] * per_t[t + 1][b]).collect()
                        })
                        .collect()
                })
                .collect()),
            Some(mixer) => {
                let mut g = Graph::new(&self.target);
                let n = self.nets.len();
                let mut ys = Vec::with_capacity(pad.horizon);
                for t in 0..pad.horizon {
                    let mut q = Vec::with_capacity(pad.batch * n);
                    for b in 0..pad.batch {
                        q.extend((0..n).map(|i| maxq[i][t + 1][b]));
                    }
                    let qv = g.constant(Tensor::new(&[pad.batch, n], q)?);
                    let s = gather_rows(batch, t + 1, mixer.state_dim, |e, t| e.states.get(t).map(|v| v.as_slice()))?;
                    let sv = g.constant(s);
                    let tot = mixer.forward(&mut g, qv, sv)?;
                    let tot = g.value(tot).data().to_vec();
                    let r = self.rewards(batch, t, stats);
                    let c = cont(t);
                    ys.push((0..pad.batch).map(|b| r[b] + gamma * c[b] * tot[b]).collect());
                }
                Ok(vec![ys])
            }
        }
    }

    /// Masked mean of `(pred − y)²` over real steps, accumulated on `g`.
    fn masked_sq(g: &mut Graph<'_>, pred: Var, y: &[f64], valid: &[f64], any_padding: bool) -> Result<Var> {
        let yv = g.constant(Tensor::new(&[y.len(), 1], y.to_vec())?);
        let d = g.sub(pred, yv)?;
        let mut sq = g.square(d);
        if any_padding {
            let m = g.constant(Tensor::new(&[valid.len(), 1], valid.to_vec())?);
            sq = g.mul(sq, m)?;
        }
        Ok(g.sum(sq))
    }

    /// Builds the TD loss for a batch on `g` (bound to `self.params`).
    pub fn loss_on(&self, g: &mut Graph<'_>, batch: &[&Episode], stats: &RewardStandardizer) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        for ep in batch {
            ep.validate()?;
            if ep.n_agents() != self.nets.len() {
                return Err(Error::shape("episode", self.nets.len(), ep.n_agents()));
            }
        }
        let pad = Padded::new(batch);
        let ys = self.td_targets(batch, &pad, stats)?;
        let steps: f64 = pad.valid.iter().flatten().sum();

        let mut chosen: Vec<Vec<Var>> = Vec::with_capacity(self.nets.len());
        for i in 0..self.nets.len() {
            let qs = self.unroll(g, batch, i, pad.horizon)?;
            let mut per_t = Vec::with_capacity(pad.horizon);
            for (t, &q) in qs.iter().enumerate() {
                let idx: Vec<usize> = batch.iter().map(|e| e.actions.get(t).map_or(0, |a| a[i])).collect();
                per_t.push(g.gather(q, &idx)?);
            }
            chosen.push(per_t);
        }

        let mut terms = Vec::new();
        match &self.mixer {
            None => {
                for (i, per_t) in chosen.iter().enumerate() {
                    for (t, &q) in per_t.iter().enumerate() {
                        terms.push(Self::masked_sq(g, q, &ys[i][t], &pad.valid[t], pad.any_padding)?);
                    }
                }
            }
            Some(mixer) => {
                for t in 0..pad.horizon {
                    let cols: Vec<Var> = chosen.iter().map(|c| c[t]).collect();
                    let qs = g.concat_cols(&cols)?;
                    let s = gather_rows(batch, t, mixer.state_dim, |e, t| e.states.get(t).map(|v| v.as_slice()))?;
                    let sv = g.constant(s);
                    let tot = mixer.forward(g, qs, sv)?;
                    terms.push(Self::masked_sq(g, tot, &ys[0][t], &pad.valid[t], pad.any_padding)?);
                }
            }
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t)?;
        }
        let per = match self.mixer {
            None => steps * self.nets.len() as f64,
            Some(_) => steps,
        };
        Ok(g.scale(total, 1.0 / per))
    }

    /// One gradient step on `batch`, followed by the periodic target copy.
    pub fn train(&mut self, batch: &[&Episode], stats: &RewardStandardizer) -> Result<TrainBatchStats> {
        let (loss, mut grads) = {
            let mut g = Graph::new(&self.params);
            let l = self.loss_on(&mut g, batch, stats)?;
            (g.value(l).item()?, g.backward(l)?)
        };
        let grad_norm = match self.config.grad_clip {
            Some(max) => clip_global_norm(&mut grads, max),
            None => grads.global_norm(),
        };
        adam_step(&mut self.params, &grads, &mut self.adam, self.config.learning_rate)?;
        self.train_steps += 1;
        let target_updated = self.maybe_update_target(self.train_steps);
        Ok(TrainBatchStats {
            loss,
            grad_norm,
            target_updated,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::comms::CommMask;
    use crate::envs::ScenarioId;

    fn config() -> ControllerConfig {
        let mut c = ControllerConfig::defaults(Algorithm::Iql, ScenarioId::HearSee);
        c.hidden_dim = 8;
        c.reward_standardisation = false;
        c
    }

    fn episode(len: usize, rng: &mut ChaCha8Rng) -> Episode {
        Episode {
            inputs: vec![(0..=len).map(|_| vec![rng.random_range(-1.0..1.0), 1.0]).collect()],
            actions: (0..len).map(|_| vec![rng.random_range(0..3)]).collect(),
            rewards: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            dones: (0..len).map(|t| t + 1 == len).collect(),
            states: (0..=len).map(|_| vec![0.0, 0.0]).collect(),
            masks: vec![CommMask::full(1); len + 1],
        }
    }

    #[test]
    fn target_copy_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Learner::new(Algorithm::Iql, config(), &[2], &[3], 2, &mut rng).unwrap();
        l.params.tensors_mut()[0].fill(0.5);
        assert!(!l.maybe_update_target(199));
        assert_ne!(l.params.checksum(), l.target.checksum());
        assert!(l.maybe_update_target(200));
        assert_eq!(l.params.checksum(), l.target.checksum());
        l.params.tensors_mut()[0].fill(-0.5);
        assert_ne!(l.params.checksum(), l.target.checksum());
    }

    #[test]
    fn padded_steps_add_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Learner::new(Algorithm::Iql, config(), &[2], &[3], 2, &mut rng).unwrap();
        let short = episode(3, &mut rng);
        let long = episode(6, &mut rng);
        let stats = RewardStandardizer::default();
        let loss = |b: &[&Episode]| {
            let mut g = Graph::new(&l.params);
            let v = l.loss_on(&mut g, b, &stats).unwrap();
            g.value(v).item().unwrap()
        };
        let joint = loss(&[&short, &long]) * 9.0;
        let apart = loss(&[&short]) * 3.0 + loss(&[&long]) * 6.0;
        assert!((joint - apart).abs() < 1e-9, "{joint} vs {apart}");
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = config();
        c.gamma = 0.0;
        let l = Learner::new(Algorithm::Iql, c, &[2], &[3], 2, &mut rng).unwrap();
        let ep = episode(4, &mut rng);
        let pad = Padded::new(&[&ep]);
        let ys = l.td_targets(&[&ep], &pad, &RewardStandardizer::default()).unwrap();
        for t in 0..4 {
            assert_eq!(ys[0][t][0], ep.rewards[t]);
        }
    }

    #[test]
    fn terminal_step_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Learner::new(Algorithm::Iql, config(), &[2], &[3], 2, &mut rng).unwrap();
        let ep = episode(4, &mut rng);
        let pad = Padded::new(&[&ep]);
        let ys = l.td_targets(&[&ep], &pad, &RewardStandardizer::default()).unwrap();
        assert_eq!(ys[0][3][0], ep.rewards[3]);
        assert_ne!(ys[0][2][0], ep.rewards[2]);
    }
}
