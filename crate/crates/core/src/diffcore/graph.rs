//! Reverse-mode tape.
//!
//! Every operation appends a node whose inputs were appended before it, so the
//! node vector is already a topological order and the reverse pass is a single
//! backwards sweep.

use super::tensor::gemm;
use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Relu(Var),
    Elu(Var),
    Abs(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    SumCols(Var),
    SliceCols { src: Var, start: usize },
    ConcatCols(Vec<Var>),
    Gather { src: Var, index: Vec<usize> },
    RowBmm { x: Var, w: Var },
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation over the parameters of at most one [`ParamStore`].
pub struct Graph<'a> {
    store: Option<&'a ParamStore>,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
}

impl<'a> Graph<'a> {
    /// A graph whose parameter leaves refer to `store` without copying.
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            bound: vec![None; store.len()],
        }
    }

    /// A graph with constants only.
    pub fn detached() -> Graph<'static> {
        Graph {
            store: None,
            nodes: Vec::new(),
            bound: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .store
                .expect("parameter node without a store")
                .get(*id),
        }
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf bound to parameter `id` of the graph's store. Repeated calls return
    /// the same node, so gradients from every use accumulate in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound[id.0] = Some(v);
        v
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("[m×k]·[k×n] with left {:?}", ta.shape()),
                format!("{:?}", tb.shape()),
            ));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `x + bias` with `bias` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let tx = self.value(x);
        let tb = self.value(bias);
        if tb.len() != tx.cols() {
            return Err(Error::shape("add_row", tx.cols(), tb.len()));
        }
        let c = tx.cols();
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(Tensor::new(&shape, out)?, Op::AddRow(x, bias), rg))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x).map(f);
        let rg = self.nodes[x.0].requires_grad;
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.map(x, Op::Scale(x, k), |v| v * k)
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::Offset(x), |v| v + c)
    }

    /// `1 − x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.offset(neg, 1.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        self.map(x, Op::Elu(x), |v| if v > 0.0 { v } else { v.exp_m1() })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, Op::Square(x), |v| v * v)
    }

    /// Hard clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Row sums: `[b × k] → [b × 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols().max(1);
        let data: Vec<f64> = t.data().chunks(c).map(|r| r.iter().sum()).collect();
        let rows = data.len();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::new(&[rows, 1], data).expect("row sums"), Op::SumCols(x), rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x);
        if start + len > cols {
            return Err(Error::shape("slice_cols", format!("columns ≤ {cols}"), start + len));
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(&[rows, len], data)?, Op::SliceCols { src: x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.dims2(p).0,
            None => return Err(Error::shape("concat_cols", "at least one input", 0)),
        };
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims2(p);
            if r != rows {
                return Err(Error::shape("concat_cols", rows, r));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(&[rows, total], data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Picks column `index[r]` from every row `r`: `[b × k] → [b × 1]`.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims2(x);
        if index.len() != rows {
            return Err(Error::shape("gather", rows, index.len()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= cols) {
            return Err(Error::shape("gather", format!("index < {cols}"), bad));
        }
        let t = self.value(x);
        let data = index.iter().enumerate().map(|(r, &i)| t.row(r)[i]).collect();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::new(&[rows, 1], data)?,
            Op::Gather {
                src: x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Per-row vector–matrix product.
    ///
    /// `x` is `[b × n]` and each row of `w` (`[b × n·e]`) holds a row-major
    /// `[n × e]` matrix; the result is `[b × e]`.
    pub fn row_bmm(&mut self, x: Var, w: Var) -> Result<Var> {
        let (b, n) = self.dims2(x);
        let (bw, nw) = self.dims2(w);
        if b != bw || n == 0 || nw % n != 0 {
            return Err(Error::shape(
                "row_bmm",
                format!("[{b} × {n}·e]"),
                format!("[{bw} × {nw}]"),
            ));
        }
        let e = nw / n;
        let tx = self.value(x);
        let tw = self.value(w);
        let mut out = vec![0.0; b * e];
        for r in 0..b {
            let xr = tx.row(r);
            let wr = tw.row(r);
            let o = &mut out[r * e..(r + 1) * e];
            for (k, &xv) in xr.iter().enumerate() {
                for (oe, wv) in o.iter_mut().zip(&wr[k * e..(k + 1) * e]) {
                    *oe += xv * wv;
                }
            }
        }
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(Tensor::new(&[b, e], out)?, Op::RowBmm { x, w }, rg))
    }

    /// Gradients of the scalar `loss` with respect to every parameter of the
    /// graph's store. Parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let store = self
            .store
            .ok_or_else(|| Error::InvalidArgument("backward on a graph without parameters".into()))?;
        let mut node_grads = self.backward_nodes(loss)?;
        let mut grads = Gradients::zeros_like(store);
        for (id, slot) in self.bound.iter().enumerate() {
            if let Some(v) = slot {
                if let Some(g) = node_grads[v.0].take() {
                    *grads.get_mut(ParamId(id)) = g;
                }
            }
        }
        Ok(grads)
    }

    /// Gradient of `loss` with respect to an arbitrary recorded value.
    pub fn grad_of(&self, loss: Var, wrt: Var) -> Result<Tensor> {
        let mut node_grads = self.backward_nodes(loss)?;
        Ok(node_grads[wrt.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.value(wrt).shape())))
    }

    fn backward_nodes(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &node.op, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut [f64]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let shape = self.value(v).shape();
        Some(
            grads[v.0]
                .get_or_insert_with(|| Tensor::zeros(shape))
                .data_mut(),
        )
    }

    fn propagate(&self, idx: usize, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let out = self.value(Var(idx)).data();
        // Elementwise unary rule: dx += g · f'(x, y).
        let unary = |grads: &mut [Option<Tensor>], x: Var, d: &dyn Fn(f64, f64) -> f64| {
            let xd = self.value(x).data();
            if let Some(dx) = self.slot(grads, x) {
                for i in 0..dx.len() {
                    dx[i] += gd[i] * d(xd[i], out[i]);
                }
            }
        };
        match op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(da) = self.slot(grads, *a) {
                    gemm(m, n, k, gd, false, tb.data(), true, da, true);
                }
                if let Some(db) = self.slot(grads, *b) {
                    gemm(k, m, n, ta.data(), true, gd, false, db, true);
                }
            }
            Op::AddRow(x, bias) => {
                if let Some(dx) = self.slot(grads, *x) {
                    dx.iter_mut().zip(gd).for_each(|(d, g)| *d += g);
                }
                let c = self.value(*x).cols().max(1);
                if let Some(db) = self.slot(grads, *bias) {
                    for row in gd.chunks(c) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.slot(grads, *v) {
                        d.iter_mut().zip(gd).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.slot(grads, *a) {
                    d.iter_mut().zip(gd).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = self.slot(grads, *b) {
                    d.iter_mut().zip(gd).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.slot(grads, *a) {
                    for i in 0..d.len() {
                        d[i] += gd[i] * bd[i];
                    }
                }
                if let Some(d) = self.slot(grads, *b) {
                    for i in 0..d.len() {
                        d[i] += gd[i] * ad[i];
                    }
                }
            }
            Op::Scale(x, k) => unary(grads, *x, &|_, _| *k),
            Op::Offset(x) => unary(grads, *x, &|_, _| 1.0),
            Op::Sigmoid(x) => unary(grads, *x, &|_, y| y * (1.0 - y)),
            Op::Tanh(x) => unary(grads, *x, &|_, y| 1.0 - y * y),
            Op::Exp(x) => unary(grads, *x, &|_, y| y),
            Op::Relu(x) => unary(grads, *x, &|v, _| if v > 0.0 { 1.0 } else { 0.0 }),
            Op::Elu(x) => unary(grads, *x, &|v, y| if v > 0.0 { 1.0 } else { y + 1.0 }),
            Op::Abs(x) => unary(grads, *x, &|v, _| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Square(x) => unary(grads, *x, &|v, _| 2.0 * v),
            Op::Clamp(x, lo, hi) => unary(grads, *x, &|v, _| {
                if v >= *lo && v <= *hi {
                    1.0
                } else {
                    0.0
                }
            }),
            Op::Sum(x) => {
                let s = gd[0];
                if let Some(d) = self.slot(grads, *x) {
                    d.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::SumCols(x) => {
                let c = self.value(*x).cols().max(1);
                if let Some(d) = self.slot(grads, *x) {
                    for (row, g) in d.chunks_mut(c).zip(gd) {
                        row.iter_mut().for_each(|d| *d += g);
                    }
                }
            }
            Op::SliceCols { src, start } => {
                let c = self.value(*src).cols();
                let len = g.cols();
                if let Some(d) = self.slot(grads, *src) {
                    for (r, grow) in gd.chunks(len.max(1)).enumerate() {
                        let drow = &mut d[r * c + start..r * c + start + len];
                        drow.iter_mut().zip(grow).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    if let Some(d) = self.slot(grads, *p) {
                        for (r, drow) in d.chunks_mut(c.max(1)).enumerate() {
                            let grow = &gd[r * total + offset..r * total + offset + c];
                            drow.iter_mut().zip(grow).for_each(|(d, g)| *d += g);
                        }
                    }
                    offset += c;
                }
            }
            Op::Gather { src, index } => {
                let c = self.value(*src).cols();
                if let Some(d) = self.slot(grads, *src) {
                    for (r, &i) in index.iter().enumerate() {
                        d[r * c + i] += gd[r];
                    }
                }
            }
            Op::RowBmm { x, w } => {
                let tx = self.value(*x);
                let tw = self.value(*w);
                let (b, n) = (tx.rows(), tx.cols());
                let e = tw.cols() / n;
                if let Some(dx) = self.slot(grads, *x) {
                    for r in 0..b {
                        let grow = &gd[r * e..(r + 1) * e];
                        let wr = tw.row(r);
                        for k in 0..n {
                            let wk = &wr[k * e..(k + 1) * e];
                            dx[r * n + k] += grow.iter().zip(wk).map(|(g, w)| g * w).sum::<f64>();
                        }
                    }
                }
                if let Some(dw) = self.slot(grads, *w) {
                    for r in 0..b {
                        let grow = &gd[r * e..(r + 1) * e];
                        let xr = tx.row(r);
                        for k in 0..n {
                            let dwk = &mut dw[(r * n + k) * e..(r * n + k + 1) * e];
                            dwk.iter_mut().zip(grow).for_each(|(d, g)| *d += g * xr[k]);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
