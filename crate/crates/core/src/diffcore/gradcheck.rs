use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of a scalar function of `store` against
/// central finite differences and returns the largest relative error.
///
/// `f` must rebuild the same computation each time it is called; it receives
/// a fresh graph bound to a (possibly perturbed) copy of `store`.
pub fn finite_diff_check<F>(store: &ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let loss = f(&mut g)?;
        g.value(loss).item()
    };

    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.get(id).data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    #[test]
    fn sum_of_params_is_exact() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::new(&[4], vec![0.1, -2.0, 3.5, 7.0]).unwrap()).unwrap();
        let err = finite_diff_check(&store, 1e-5, |g| {
            let v = g.param(w);
            Ok(g.sum(v))
        })
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }
}
