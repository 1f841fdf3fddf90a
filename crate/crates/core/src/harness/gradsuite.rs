use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controllers::{QMixer, RecurrentQNet};
use crate::diffcore::{finite_diff_check, gaussian_nll, linear, GruCell, Graph, LstmCell, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::worldmodel::{ModelEpisode, PredictiveModel};

pub const GRAD_TOLERANCE: f64 = 1e-5;
const EPS: f64 = 1e-5;
/// The sequence loss is O(10) while some recurrent-weight gradients are
/// O(1e-6), so a 1e-5 step is dominated by cancellation.
const SEQUENCE_EPS: f64 = 3e-4;
const INSTANCES: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheck {
    pub name: &'static str,
    pub instances: u64,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).expect("shape")
}

/// `Σ v ⊙ w` for a fixed random `w`, so every output element carries an O(1)
/// gradient.
fn project(g: &mut Graph<'_>, v: Var, w: &Tensor) -> Result<Var> {
    let wv = g.constant(w.clone());
    let m = g.mul(v, wv)?;
    Ok(g.sum(m))
}

/// Gives every bias a random value so saturating paths are exercised too.
fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for t in store.tensors_mut() {
        if t.shape().len() == 1 {
            let n = t.len();
            *t = random(rng, &[n], 0.5);
        }
    }
}

fn worst(name: &'static str, mut f: impl FnMut(&mut ChaCha8Rng) -> Result<f64>) -> Result<GradCheck> {
    let mut max = 0.0f64;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37 + seed);
        max = max.max(f(&mut rng)?);
    }
    Ok(GradCheck {
        name,
        instances: INSTANCES,
        max_relative_error: max,
        tolerance: GRAD_TOLERANCE,
    })
}

/// Central-difference checks of every learned building block at random f64
/// instances.
pub fn gradient_suite() -> Result<Vec<GradCheck>> {
    Ok(vec![
        worst("linear", |rng| {
            let mut s = ParamStore::new();
            let x = s.insert("x", random(rng, &[3, 4], 1.0))?;
            let w = s.insert("w", random(rng, &[4, 2], 1.0))?;
            let b = s.insert("b", random(rng, &[2], 1.0))?;
            let proj = random(rng, &[3, 2], 1.0);
            finite_diff_check(&s, EPS, |g| {
                let (x, w, b) = (g.param(x), g.param(w), g.param(b));
                let y = linear(g, x, w, b)?;
                project(g, y, &proj)
            })
        })?,
        worst("gru_cell", |rng| {
            let mut s = ParamStore::new();
            let cell = GruCell::new(&mut s, "gru", 3, 4, rng)?;
            jitter(&mut s, rng);
            let x = s.insert("x", random(rng, &[2, 3], 1.0))?;
            let h = s.insert("h", random(rng, &[2, 4], 1.0))?;
            let proj = random(rng, &[2, 4], 1.0);
            finite_diff_check(&s, EPS, |g| {
                let (x, h) = (g.param(x), g.param(h));
                let h1 = cell.forward(g, x, h)?;
                let h2 = cell.forward(g, x, h1)?;
                project(g, h2, &proj)
            })
        })?,
        worst("lstm_cell", |rng| {
            let mut s = ParamStore::new();
            let cell = LstmCell::new(&mut s, "lstm", 3, 4, rng)?;
            jitter(&mut s, rng);
            let x = s.insert("x", random(rng, &[2, 3], 1.0))?;
            let h = s.insert("h", random(rng, &[2, 4], 1.0))?;
            let c = s.insert("c", random(rng, &[2, 4], 1.0))?;
            let (ph, pc) = (random(rng, &[2, 4], 1.0), random(rng, &[2, 4], 1.0));
            finite_diff_check(&s, EPS, |g| {
                let (x, h, c) = (g.param(x), g.param(h), g.param(c));
                let (h1, c1) = cell.forward(g, x, h, c)?;
                let (h2, c2) = cell.forward(g, x, h1, c1)?;
                let a = project(g, h2, &ph)?;
                let b = project(g, c2, &pc)?;
                g.add(a, b)
            })
        })?,
        worst("gaussian_nll", |rng| {
            let mut s = ParamStore::new();
            let m = s.insert("mean", random(rng, &[3, 2], 1.0))?;
            let lv = s.insert("logvar", random(rng, &[3, 2], 1.0))?;
            let target = random(rng, &[3, 2], 2.0);
            finite_diff_check(&s, EPS, |g| {
                let (m, lv) = (g.param(m), g.param(lv));
                let t = g.constant(target.clone());
                gaussian_nll(g, m, lv, t)
            })
        })?,
        worst("q_forward", |rng| {
            let mut s = ParamStore::new();
            let net = RecurrentQNet::new(&mut s, "agent0", 3, 4, 5, rng)?;
            jitter(&mut s, rng);
            let x0 = random(rng, &[2, 3], 1.0);
            let x1 = random(rng, &[2, 3], 1.0);
            let proj = random(rng, &[2, 5], 1.0);
            finite_diff_check(&s, EPS, |g| {
                let h = g.constant(Tensor::zeros(&[2, 4]));
                let x = g.constant(x0.clone());
                let (_, h) = net.forward(g, x, h)?;
                let x = g.constant(x1.clone());
                let (q, _) = net.forward(g, x, h)?;
                project(g, q, &proj)
            })
        })?,
        worst("model_loss", |rng| {
            let mut model = PredictiveModel::new(&[2, 3], 4, rng)?;
            jitter(&mut model.params, rng);
            let seq: Vec<Vec<f64>> = (0..4).map(|_| random(rng, &[5], 1.0).into_data()).collect();
            let ep = ModelEpisode::from_observations(&seq);
            finite_diff_check(&model.params, SEQUENCE_EPS, |g| Ok(model.loss_vars(g, &[&ep])?.total))
        })?,
        worst("qmix", |rng| {
            let mut s = ParamStore::new();
            let mixer = QMixer::new(&mut s, 3, 4, 5, 6, rng)?;
            jitter(&mut s, rng);
            let qs = s.insert("qs", random(rng, &[2, 3], 1.0))?;
            let state = random(rng, &[2, 4], 1.0);
            let proj = random(rng, &[2, 1], 1.0);
            finite_diff_check(&s, EPS, |g| {
                let q = g.param(qs);
                let st = g.constant(state.clone());
                let tot = mixer.forward(g, q, st)?;
                project(g, tot, &proj)
            })
        })?,
    ])
}
