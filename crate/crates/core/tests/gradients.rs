//! Finite-difference checks for every differentiable primitive and layer.

use hmarl::diffcore::{
    finite_diff_check, gaussian_nll, linear, GruCell, Graph, LstmCell, ParamStore, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Contracts `v` with fixed random weights so every output element carries an O(1) gradient.
fn project(g: &mut Graph<'_>, v: Var, rng: &mut ChaCha8Rng) -> Var {
    let shape = g.value(v).shape().to_vec();
    let w = g.constant(random_tensor(rng, &shape, 1.0));
    let p = g.mul(v, w).unwrap();
    g.sum(p)
}

#[test]
fn linear_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let x = store.insert("x", random_tensor(&mut rng, &[3, 4], 1.0)).unwrap();
        let w = store.insert("w", random_tensor(&mut rng, &[4, 2], 1.0)).unwrap();
        let b = store.insert("b", random_tensor(&mut rng, &[2], 1.0)).unwrap();
        let proj = random_tensor(&mut rng, &[3, 2], 1.0);
        let err = finite_diff_check(&store, EPS, |g| {
            let (xv, wv, bv) = (g.param(x), g.param(w), g.param(b));
            let y = linear(g, xv, wv, bv)?;
            let pv = g.constant(proj.clone());
            let m = g.mul(y, pv)?;
            Ok(g.sum(m))
        })
        .unwrap();
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn gru_cell_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "gru", 3, 4, &mut rng).unwrap();
        // non-zero biases so every gate is exercised
        for id in [cell.b_ih, cell.b_hh] {
            *store.get_mut(id) = random_tensor(&mut rng, &[12], 0.5);
        }
        let x = random_tensor(&mut rng, &[2, 3], 1.0);
        let h = random_tensor(&mut rng, &[2, 4], 1.0);
        let mut prng = ChaCha8Rng::seed_from_u64(seed);
        let proj = random_tensor(&mut prng, &[2, 4], 1.0);
        let err = finite_diff_check(&store, EPS, |g| {
            let xv = g.constant(x.clone());
            let hv = g.constant(h.clone());
            let h1 = cell.forward(g, xv, hv)?;
            let h2 = cell.forward(g, xv, h1)?;
            let pv = g.constant(proj.clone());
            let m = g.mul(h2, pv)?;
            Ok(g.sum(m))
        })
        .unwrap();
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn lstm_cell_two_steps_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 3, 4, &mut rng).unwrap();
        let x0 = random_tensor(&mut rng, &[2, 3], 1.0);
        let x1 = random_tensor(&mut rng, &[2, 3], 1.0);
        let proj_h = random_tensor(&mut rng, &[2, 4], 1.0);
        let proj_c = random_tensor(&mut rng, &[2, 4], 1.0);
        let err = finite_diff_check(&store, EPS, |g| {
            let h = g.constant(Tensor::zeros(&[2, 4]));
            let c = g.constant(Tensor::zeros(&[2, 4]));
            let a = g.constant(x0.clone());
            let (h, c) = cell.forward(g, a, h, c)?;
            let b = g.constant(x1.clone());
            let (h, c) = cell.forward(g, b, h, c)?;
            let ph = g.constant(proj_h.clone());
            let pc = g.constant(proj_c.clone());
            let mh = g.mul(h, ph)?;
            let mc = g.mul(c, pc)?;
            let s = g.add(mh, mc)?;
            Ok(g.sum(s))
        })
        .unwrap();
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn gaussian_nll_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut store = ParamStore::new();
        let mean = store.insert("mean", random_tensor(&mut rng, &[3, 5], 2.0)).unwrap();
        let logvar = store.insert("logvar", random_tensor(&mut rng, &[3, 5], 2.0)).unwrap();
        let target = random_tensor(&mut rng, &[3, 5], 2.0);
        let err = finite_diff_check(&store, EPS, |g| {
            let (m, lv) = (g.param(mean), g.param(logvar));
            let t = g.constant(target.clone());
            gaussian_nll(g, m, lv, t)
        })
        .unwrap();
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn remaining_primitives_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut store = ParamStore::new();
        let a = store.insert("a", random_tensor(&mut rng, &[3, 4], 1.5)).unwrap();
        let w = store.insert("w", random_tensor(&mut rng, &[3, 8], 1.5)).unwrap();
        let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
        let proj_seed = 500 + seed;
        let err = finite_diff_check(&store, EPS, |g| {
            let mut prng = ChaCha8Rng::seed_from_u64(proj_seed);
            let av = g.param(a);
            let wv = g.param(w);
            let e = g.elu(av);
            let r = g.relu(av);
            let ab = g.abs(av);
            let cl = g.clamp(av, -1.0, 1.0);
            let halves = g.slice_cols(e, 0, 2)?;
            let bmm = g.row_bmm(halves, wv)?;
            let cat = g.concat_cols(&[r, ab, cl, bmm])?;
            let ex = g.exp(cat);
            let sc = g.sum_cols(ex);
            let gathered = g.gather(av, &idx)?;
            let both = g.concat_cols(&[sc, gathered])?;
            Ok(project(g, both, &mut prng))
        })
        .unwrap();
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}
