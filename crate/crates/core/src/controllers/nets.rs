use rand::Rng;

use crate::diffcore::{GruCell, Graph, Linear, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// GRU trunk followed by a linear head over the agent's actions.
#[derive(Clone, Debug)]
pub struct RecurrentQNet {
    pub gru: GruCell,
    pub head: Linear,
}

impl RecurrentQNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(RecurrentQNet {
            gru: GruCell::new(store, &format!("{prefix}.gru"), input_dim, hidden, rng)?,
            head: Linear::new(store, &format!("{prefix}.head"), hidden, n_actions, rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.gru.input
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden
    }

    pub fn n_actions(&self) -> usize {
        self.head.d_out
    }

    /// One step: `(q, h')`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<(Var, Var)> {
        let h = self.gru.forward(g, x, h)?;
        let q = self.head.forward(g, h)?;
        Ok((q, h))
    }

    /// Q-values for one input row, advancing the stored hidden row.
    pub fn act_step(&self, store: &ParamStore, input: &[f64], hidden: &mut Tensor) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("q_forward", self.input_dim(), input.len()));
        }
        let mut g = Graph::new(store);
        let x = g.constant(Tensor::row_vector(input));
        let h = g.constant(hidden.clone());
        let (q, h) = self.forward(&mut g, x, h)?;
        *hidden = g.value(h).clone();
        Ok(g.value(q).data().to_vec())
    }
}

/// Monotonic mixing of per-agent utilities conditioned on the global state.
///
/// All mixing weights pass through `|·|`, so `∂Q_tot/∂q_i ≥ 0` everywhere.
#[derive(Clone, Debug)]
pub struct QMixer {
    pub n_agents: usize,
    pub state_dim: usize,
    pub embed: usize,
    w1_hidden: Linear,
    w1_out: Linear,
    b1: Linear,
    w2_hidden: Linear,
    w2_out: Linear,
    v_hidden: Linear,
    v_out: Linear,
}

pub const MIXER_EMBED: usize = 32;
pub const HYPERNET_HIDDEN: usize = 64;

impl QMixer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        hyper_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut lin = |name: &str, i, o| Linear::new(store, &format!("mixer.{name}"), i, o, rng);
        Ok(QMixer {
            n_agents,
            state_dim,
            embed,
            w1_hidden: lin("hyper_w1.0", state_dim, hyper_hidden)?,
            w1_out: lin("hyper_w1.1", hyper_hidden, n_agents * embed)?,
            b1: lin("hyper_b1", state_dim, embed)?,
            w2_hidden: lin("hyper_w2.0", state_dim, hyper_hidden)?,
            w2_out: lin("hyper_w2.1", hyper_hidden, embed)?,
            v_hidden: lin("v.0", state_dim, embed)?,
            v_out: lin("v.1", embed, 1)?,
        })
    }

    /// Mixing weights `(|W1|, b1, |W2|, V)` for a batch of states.
    pub fn hyper(&self, g: &mut Graph<'_>, state: Var) -> Result<[Var; 4]> {
        let a = self.w1_hidden.forward(g, state)?;
        let a = g.relu(a);
        let w1 = self.w1_out.forward(g, a)?;
        let w1 = g.abs(w1);
        let b1 = self.b1.forward(g, state)?;
        let a = self.w2_hidden.forward(g, state)?;
        let a = g.relu(a);
        let w2 = self.w2_out.forward(g, a)?;
        let w2 = g.abs(w2);
        let a = self.v_hidden.forward(g, state)?;
        let a = g.relu(a);
        let v = self.v_out.forward(g, a)?;
        Ok([w1, b1, w2, v])
    }

    /// `Q_tot = |W2|ᵀ elu(q|W1| + b1) + V(s)`, `[b × n] → [b × 1]`.
    pub fn forward(&self, g: &mut Graph<'_>, qs: Var, state: Var) -> Result<Var> {
        let (rows, cols) = (g.value(qs).rows(), g.value(qs).cols());
        if cols != self.n_agents {
            return Err(Error::shape("qmix", self.n_agents, cols));
        }
        let s = g.value(state).shape().to_vec();
        if s != [rows, self.state_dim] {
            return Err(Error::shape("qmix", format!("state [{rows}, {}]", self.state_dim), format!("{s:?}")));
        }
        let [w1, b1, w2, v] = self.hyper(g, state)?;
        let hidden = g.row_bmm(qs, w1)?;
        let hidden = g.add(hidden, b1)?;
        let hidden = g.elu(hidden);
        let y = g.mul(hidden, w2)?;
        let y = g.sum_cols(y);
        g.add(y, v)
    }

    /// Makes a one-agent mixer pass its input straight through:
    /// `Q_tot = q` whenever `q > −offset`.
    pub fn identity_init(&self, store: &mut ParamStore, offset: f64) -> Result<()> {
        if self.n_agents != 1 {
            return Err(Error::InvalidArgument("identity mixer needs exactly one agent".into()));
        }
        for lin in [&self.w1_out, &self.b1, &self.w2_out, &self.v_out] {
            store.get_mut(lin.weight).fill(0.0);
        }
        let e = self.embed;
        let unit = |k: f64| {
            let mut v = vec![0.0; e];
            v[0] = k;
            Tensor::new(&[e], v)
        };
        *store.get_mut(self.w1_out.bias) = unit(1.0)?;
        *store.get_mut(self.b1.bias) = unit(offset)?;
        *store.get_mut(self.w2_out.bias) = unit(1.0)?;
        *store.get_mut(self.v_out.bias) = Tensor::new(&[1], vec![-offset])?;
        Ok(())
    }
}
