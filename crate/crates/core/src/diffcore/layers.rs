use rand::Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `y = x·W + bias`.
pub fn linear(g: &mut Graph<'_>, x: Var, w: Var, bias: Var) -> Result<Var> {
    let (wr, wc) = {
        let t = g.value(w);
        (t.rows(), t.cols())
    };
    let xc = g.value(x).cols();
    if xc != wr {
        return Err(Error::shape("linear", format!("input with {wr} columns"), xc));
    }
    if g.value(bias).len() != wc {
        return Err(Error::shape("linear", format!("bias of length {wc}"), g.value(bias).len()));
    }
    let xw = g.matmul(x, w)?;
    g.add_row(xw, bias)
}

/// Sum over all elements of `½(logvar + (target − mean)²·e^(−logvar) + ln 2π)`.
pub fn gaussian_nll(g: &mut Graph<'_>, mean: Var, logvar: Var, target: Var) -> Result<Var> {
    let shapes = [mean, logvar, target].map(|v| g.value(v).shape().to_vec());
    if shapes[0] != shapes[1] || shapes[0] != shapes[2] {
        return Err(Error::shape(
            "gaussian_nll",
            format!("{:?} for mean, logvar and target", shapes[0]),
            format!("{:?} / {:?}", shapes[1], shapes[2]),
        ));
    }
    let elements_nll = gaussian_nll_elements(g, mean, logvar, target)?;
    Ok(g.sum(elements_nll))
}

/// Elementwise NLL terms, same shape as the inputs.
pub(crate) fn gaussian_nll_elements(g: &mut Graph<'_>, mean: Var, logvar: Var, target: Var) -> Result<Var> {
    let diff = g.sub(target, mean)?;
    let sq = g.square(diff);
    let neg = g.scale(logvar, -1.0);
    let precision = g.exp(neg);
    let weighted = g.mul(sq, precision)?;
    let inner = g.add(logvar, weighted)?;
    let with_const = g.offset(inner, LN_2PI);
    Ok(g.scale(with_const, 0.5))
}

/// Affine layer with parameters `W: [d_in × d_out]` and `b: [d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert_uniform(format!("{prefix}.weight"), d_in, d_out, rng)?;
        let bias = store.insert(format!("{prefix}.bias"), Tensor::zeros(&[d_out]))?;
        Ok(Linear { weight, bias, d_in, d_out })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        linear(g, x, w, b)
    }
}

/// GRU cell with gate order (reset, update, candidate):
///
/// ```text
/// r  = σ(x·W_ir + b_ir + h·W_hr + b_hr)
/// z  = σ(x·W_iz + b_iz + h·W_hz + b_hz)
/// n  = tanh(x·W_in + b_in + r ⊙ (h·W_hn + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(GruCell {
            w_ih: store.insert_uniform(format!("{prefix}.w_ih"), input, 3 * hidden, rng)?,
            w_hh: store.insert_uniform(format!("{prefix}.w_hh"), hidden, 3 * hidden, rng)?,
            b_ih: store.insert(format!("{prefix}.b_ih"), Tensor::zeros(&[3 * hidden]))?,
            b_hh: store.insert(format!("{prefix}.b_hh"), Tensor::zeros(&[3 * hidden]))?,
            input,
            hidden,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let (hx, hc) = (g.value(x).rows(), g.value(x).cols());
        if hc != self.input {
            return Err(Error::shape("gru_cell", format!("input width {}", self.input), hc));
        }
        let hs = g.value(h).shape().to_vec();
        if hs != [hx, self.hidden] {
            return Err(Error::shape("gru_cell", format!("hidden [{hx}, {}]", self.hidden), format!("{hs:?}")));
        }
        let hdim = self.hidden;
        let (w_ih, b_ih, w_hh, b_hh) = (g.param(self.w_ih), g.param(self.b_ih), g.param(self.w_hh), g.param(self.b_hh));
        let gi = linear(g, x, w_ih, b_ih)?;
        let gh = linear(g, h, w_hh, b_hh)?;
        let gi_rz = g.slice_cols(gi, 0, 2 * hdim)?;
        let gh_rz = g.slice_cols(gh, 0, 2 * hdim)?;
        let rz_pre = g.add(gi_rz, gh_rz)?;
        let rz = g.sigmoid(rz_pre);
        let r = g.slice_cols(rz, 0, hdim)?;
        let z = g.slice_cols(rz, hdim, hdim)?;
        let gi_n = g.slice_cols(gi, 2 * hdim, hdim)?;
        let gh_n = g.slice_cols(gh, 2 * hdim, hdim)?;
        let gated = g.mul(r, gh_n)?;
        let n_pre = g.add(gi_n, gated)?;
        let n = g.tanh(n_pre);
        // h' = n + z ⊙ (h − n)
        let h_minus_n = g.sub(h, n)?;
        let carried = g.mul(z, h_minus_n)?;
        g.add(n, carried)
    }
}

/// LSTM cell with gate order (input, forget, cell, output).
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    /// Forget-gate bias starts at 1.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut b_ih = Tensor::zeros(&[4 * hidden]);
        b_ih.data_mut()[hidden..2 * hidden].fill(1.0);
        Ok(LstmCell {
            w_ih: store.insert_uniform(format!("{prefix}.w_ih"), input, 4 * hidden, rng)?,
            w_hh: store.insert_uniform(format!("{prefix}.w_hh"), hidden, 4 * hidden, rng)?,
            b_ih: store.insert(format!("{prefix}.b_ih"), b_ih)?,
            b_hh: store.insert(format!("{prefix}.b_hh"), Tensor::zeros(&[4 * hidden]))?,
            input,
            hidden,
        })
    }

    /// Returns `(h', c')`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let (rows, cols) = (g.value(x).rows(), g.value(x).cols());
        if cols != self.input {
            return Err(Error::shape("lstm_cell", format!("input width {}", self.input), cols));
        }
        for s in [h, c] {
            let shape = g.value(s).shape().to_vec();
            if shape != [rows, self.hidden] {
                return Err(Error::shape("lstm_cell", format!("state [{rows}, {}]", self.hidden), format!("{shape:?}")));
            }
        }
        let hd = self.hidden;
        let (w_ih, b_ih, w_hh, b_hh) = (g.param(self.w_ih), g.param(self.b_ih), g.param(self.w_hh), g.param(self.b_hh));
        let gi = linear(g, x, w_ih, b_ih)?;
        let gh = linear(g, h, w_hh, b_hh)?;
        let gates = g.add(gi, gh)?;
        let ifo_lo = g.slice_cols(gates, 0, 2 * hd)?;
        let if_ = g.sigmoid(ifo_lo);
        let i = g.slice_cols(if_, 0, hd)?;
        let f = g.slice_cols(if_, hd, hd)?;
        let cand_pre = g.slice_cols(gates, 2 * hd, hd)?;
        let cand = g.tanh(cand_pre);
        let o_pre = g.slice_cols(gates, 3 * hd, hd)?;
        let o = g.sigmoid(o_pre);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let c_act = g.tanh(c_next);
        let h_next = g.mul(o, c_act)?;
        Ok((h_next, c_next))
    }
}
