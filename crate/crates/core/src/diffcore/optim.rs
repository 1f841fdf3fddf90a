use super::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let norm = grads.global_norm();
    if norm > max_norm {
        let k = max_norm / norm;
        grads.tensors_mut().iter_mut().for_each(|t| t.scale_in_place(k));
    }
    norm
}

/// First and second moment estimates for every parameter of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.tensors().len() != store.len() || state.m.len() != store.len() {
        return Err(Error::shape("adam_step", store.len(), grads.tensors().len()));
    }
    for (p, g) in store.tensors().iter().zip(grads.tensors()) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", format!("{:?}", p.shape()), format!("{:?}", g.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in store
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Graph;

    fn grads_of(values: &[f64]) -> (ParamStore, Gradients) {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(&[values.len()], vec![0.0; values.len()]).unwrap()).unwrap();
        let mut g = Gradients::zeros_like(&store);
        g.tensors_mut()[0].data_mut().copy_from_slice(values);
        (store, g)
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let (_, mut g) = grads_of(&[0.3, 0.4]);
        let before = g.clone();
        clip_global_norm(&mut g, 1.0);
        assert_eq!(g, before);
    }

    #[test]
    fn clip_three_four_five() {
        let (_, mut g) = grads_of(&[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        let d = g.tensors()[0].data();
        assert!((d[0] - 0.6).abs() < 1e-15 && (d[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        let before = store.clone();
        let mut state = AdamState::new(&store);
        let zero = Gradients::zeros_like(&store);
        for _ in 0..5 {
            adam_step(&mut store, &zero, &mut state, 0.1).unwrap();
        }
        assert_eq!(store, before);
        assert_eq!(state.step(), 5);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        for g0 in [0.01, -3.0, 250.0] {
            let mut store = ParamStore::new();
            store.insert("w", Tensor::scalar(1.0)).unwrap();
            let mut state = AdamState::new(&store);
            let (_, g) = grads_of(&[g0]);
            adam_step(&mut store, &g, &mut state, 0.05).unwrap();
            let moved = 1.0 - store.tensors()[0].data()[0];
            assert!((moved.abs() - 0.05).abs() < 1e-6, "g={g0} moved={moved}");
            assert_eq!(moved.signum(), g0.signum());
        }
    }

    #[test]
    fn adam_descends_a_parabola() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut state = AdamState::new(&store);
        for _ in 0..100 {
            let grads = {
                let mut g = Graph::new(&store);
                let wv = g.param(w);
                let sq = g.square(wv);
                let loss = g.sum(sq);
                g.backward(loss).unwrap()
            };
            adam_step(&mut store, &grads, &mut state, 0.05).unwrap();
        }
        assert!(store.get(w).data()[0].abs() < 0.1);
    }

    #[test]
    fn adam_rejects_mismatched_gradients() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[2])).unwrap();
        let mut state = AdamState::new(&store);
        let (_, bad) = grads_of(&[1.0, 2.0, 3.0]);
        assert!(adam_step(&mut store, &bad, &mut state, 0.1).is_err());
    }
}
