//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`] and are identified by their index in a
//! [`ParamSet`]; [`Tape::backward`] returns one gradient per parameter.
//! Tapes are cheap and single-use, so independent samples get independent
//! tapes and can be processed on different threads.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match its shape");
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Matrix::from_vec(1, n, data)
    }

    pub fn scalar(x: f64) -> Self {
        Matrix::from_vec(1, 1, vec![x])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    fn add_assign(&mut self, o: &Matrix) {
        debug_assert_eq!(self.shape(), o.shape());
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }
}

/// `a (r×k) · b (k×c)`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &x) in a.row(i).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in orow.iter_mut().zip(b.row(k)) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a (r×k) · bᵀ` with `b` of shape `c×k`.
pub fn matmul_t(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_t shape mismatch");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b` with `a` of shape `k×r` and `b` of shape `k×c`.
pub fn t_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "t_matmul shape mismatch");
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let br = b.row(k);
        for (i, &x) in a.row(k).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(br) {
                *o += x * y;
            }
        }
    }
    out
}

/// Named learnable matrices shared read-only between tapes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub values: Vec<Arc<Matrix>>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, m: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(Arc::new(m));
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|m| m.is_finite())
    }
}

/// Gradient per parameter; `None` where the parameter was not reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Option<Matrix>>);

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Grads {
        Grads(params.values.iter().map(|m| Some(Matrix::zeros(m.rows, m.cols))).collect())
    }

    pub fn accumulate(&mut self, o: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, f: f64) {
        for m in self.0.iter_mut().flatten() {
            for x in &mut m.data {
                *x *= f;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|m| m.sq_norm()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|m| m.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|m| m.data.iter().all(|&x| x == 0.0))
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Vec<f64>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var, Vec<bool>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
    Pick(Var, usize, usize),
    Sum(Vec<Var>),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Matrix, inv_std: Vec<f64> },
}

struct Node {
    value: Matrix,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Const)
    }

    /// Parameter `idx` of `params`; repeated calls return the same variable.
    pub fn param(&mut self, params: &ParamSet, idx: usize) -> Var {
        if let Some(&v) = self.params.get(&idx) {
            return v;
        }
        let v = self.push((*params.values[idx]).clone(), Op::Param(idx));
        self.params.insert(idx, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = matmul_t(self.value(a), self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Matrix::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect())
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let x = self.value(a);
        Matrix::from_vec(x.rows, x.cols, x.data.iter().map(|&p| f(p)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    /// Adds the `1×c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (x, r) = (self.value(a), self.value(b));
        assert_eq!((1, x.cols), r.shape(), "add_row expects a 1×cols row");
        let mut v = x.clone();
        for row in v.data.chunks_mut(x.cols) {
            for (o, &y) in row.iter_mut().zip(&r.data) {
                *o += y;
            }
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, f: f64) -> Var {
        let v = self.map(a, |p| p * f);
        self.push(v, Op::Scale(a, f))
    }

    /// Multiplies row `i` of `a` by the constant `f[i]`.
    pub fn scale_rows(&mut self, a: Var, f: Vec<f64>) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, f.len());
        let mut v = x.clone();
        for (row, &s) in v.data.chunks_mut(x.cols.max(1)).zip(&f) {
            for o in row {
                *o *= s;
            }
        }
        self.push(v, Op::ScaleRows(a, f))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |p| p.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, |p| 1.0 / (1.0 + (-p).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for row in v.data.chunks_mut(x.cols) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for o in row.iter_mut() {
                *o = (*o - m).exp();
                z += *o;
            }
            for o in row.iter_mut() {
                *o /= z;
            }
        }
        self.push(v, Op::Softmax(a))
    }

    /// Row-wise log-softmax over the entries where `mask` is true; masked
    /// entries become `-inf`. Every row needs at least one open entry.
    pub fn log_softmax_masked(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let x = self.value(a);
        assert_eq!(mask.len(), x.len());
        let mut v = x.clone();
        for (row, m) in v.data.chunks_mut(x.cols).zip(mask.chunks(x.cols)) {
            let mx = row
                .iter()
                .zip(m)
                .filter(|(_, &ok)| ok)
                .map(|(&p, _)| p)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(mx > f64::NEG_INFINITY, "log_softmax over an empty mask");
            let z: f64 = row.iter().zip(m).filter(|(_, &ok)| ok).map(|(&p, _)| (p - mx).exp()).sum();
            let lse = mx + z.ln();
            for (o, &ok) in row.iter_mut().zip(m) {
                *o = if ok { *o - lse } else { f64::NEG_INFINITY };
            }
        }
        self.push(v, Op::LogSoftmax(a, mask))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut data = Vec::with_capacity(x.rows * len);
        for r in 0..x.rows {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let v = Matrix::from_vec(x.rows, len, data);
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows, rows, "concat_cols row mismatch");
                data.extend_from_slice(m.row(r));
            }
        }
        let v = Matrix::from_vec(rows, cols, data);
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Rows `idx[0], idx[1], ..` of `a` stacked.
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * x.cols);
        for &i in &idx {
            data.extend_from_slice(x.row(i));
        }
        let v = Matrix::from_vec(idx.len(), x.cols, data);
        self.push(v, Op::GatherRows(a, idx))
    }

    /// Output row `idx[e]` receives the sum of input rows `e`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Vec<usize>, rows: usize) -> Var {
        let x = self.value(a);
        assert_eq!(idx.len(), x.rows);
        let mut v = Matrix::zeros(rows, x.cols);
        for (e, &i) in idx.iter().enumerate() {
            for (o, &y) in v.data[i * x.cols..(i + 1) * x.cols].iter_mut().zip(x.row(e)) {
                *o += y;
            }
        }
        self.push(v, Op::ScatterAddRows(a, idx))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Matrix::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, &y) in v.data.iter_mut().zip(x.row(r)) {
                *o += y;
            }
        }
        let inv = 1.0 / x.rows as f64;
        for o in &mut v.data {
            *o *= inv;
        }
        self.push(v, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Matrix::scalar(s), Op::SumAll(a))
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let s = self.value(a).get(r, c);
        self.push(Matrix::scalar(s), Op::Pick(a, r, c))
    }

    /// Elementwise sum of equally shaped variables.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut v = self.value(parts[0]).clone();
        for &p in &parts[1..] {
            v.add_assign(self.value(p));
        }
        self.push(v, Op::Sum(parts.to_vec()))
    }

    /// Row-wise layer normalisation with a learned `1×c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xm = self.value(x);
        let c = xm.cols;
        let mut xhat = xm.clone();
        let mut inv_std = Vec::with_capacity(xm.rows);
        for row in xhat.data.chunks_mut(c) {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for o in row.iter_mut() {
                *o = (*o - mu) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut y = xhat.clone();
        for row in y.data.chunks_mut(c) {
            for ((o, &gg), &bb) in row.iter_mut().zip(&g.data).zip(&b.data) {
                *o = *o * gg + bb;
            }
        }
        self.push(y, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var, n_params: usize) -> Grads {
        let seed = Matrix::scalar(1.0);
        self.backward_with_seed(loss, seed, n_params)
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `out`).
    pub fn backward_with_seed(&self, out: Var, seed: Matrix, n_params: usize) -> Grads {
        assert_eq!(seed.shape(), self.value(out).shape(), "seed shape mismatch");
        let mut g: Vec<Option<Matrix>> = (0..=out.0).map(|_| None).collect();
        g[out.0] = Some(seed);
        let mut grads = Grads(vec![None; n_params]);
        for i in (0..=out.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, m: Matrix| match &mut g[v.0] {
                Some(x) => x.add_assign(&m),
                slot => *slot = Some(m),
            };
            match &node.op {
                Op::Const => {}
                Op::Param(p) => match &mut grads.0[*p] {
                    Some(x) => x.add_assign(&gi),
                    slot => *slot = Some(gi),
                },
                Op::MatMul(a, b) => {
                    acc(*a, matmul_t(&gi, self.value(*b)));
                    acc(*b, t_matmul(self.value(*a), &gi));
                }
                Op::MatMulT(a, b) => {
                    acc(*a, matmul(&gi, self.value(*b)));
                    acc(*b, t_matmul(&gi, self.value(*a)));
                }
                Op::Add(a, b) => {
                    acc(*a, gi.clone());
                    acc(*b, gi);
                }
                Op::Sub(a, b) => {
                    let mut neg = gi.clone();
                    neg.data.iter_mut().for_each(|x| *x = -*x);
                    acc(*a, gi);
                    acc(*b, neg);
                }
                Op::AddRow(a, b) => {
                    let mut rb = Matrix::zeros(1, gi.cols);
                    for r in 0..gi.rows {
                        for (o, &y) in rb.data.iter_mut().zip(gi.row(r)) {
                            *o += y;
                        }
                    }
                    acc(*a, gi);
                    acc(*b, rb);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = Matrix::from_vec(gi.rows, gi.cols, gi.data.iter().zip(&y.data).map(|(g, y)| g * y).collect());
                    let gb = Matrix::from_vec(gi.rows, gi.cols, gi.data.iter().zip(&x.data).map(|(g, x)| g * x).collect());
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Scale(a, f) => {
                    let mut m = gi;
                    m.data.iter_mut().for_each(|x| *x *= f);
                    acc(*a, m);
                }
                Op::ScaleRows(a, f) => {
                    let mut m = gi;
                    let c = m.cols.max(1);
                    for (row, &s) in m.data.chunks_mut(c).zip(f) {
                        row.iter_mut().for_each(|x| *x *= s);
                    }
                    acc(*a, m);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut m = gi;
                    for (o, &p) in m.data.iter_mut().zip(&x.data) {
                        if p <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    acc(*a, m);
                }
                Op::Tanh(a) | Op::Sigmoid(a) | Op::Exp(a) => {
                    let y = &node.value;
                    let mut m = gi;
                    for (o, &t) in m.data.iter_mut().zip(&y.data) {
                        *o *= match node.op {
                            Op::Tanh(_) => 1.0 - t * t,
                            Op::Sigmoid(_) => t * (1.0 - t),
                            _ => t,
                        };
                    }
                    acc(*a, m);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut m = gi;
                    for (grow, yrow) in m.data.chunks_mut(y.cols).zip(y.data.chunks(y.cols)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, p)| g * p).sum();
                        for (o, &p) in grow.iter_mut().zip(yrow) {
                            *o = p * (*o - dot);
                        }
                    }
                    acc(*a, m);
                }
                Op::LogSoftmax(a, mask) => {
                    let y = &node.value;
                    let mut m = gi;
                    let c = y.cols;
                    for ((grow, yrow), mrow) in
                        m.data.chunks_mut(c).zip(y.data.chunks(c)).zip(mask.chunks(c))
                    {
                        let s: f64 = grow.iter().zip(mrow).filter(|(_, &ok)| ok).map(|(g, _)| g).sum();
                        for ((o, &ly), &ok) in grow.iter_mut().zip(yrow).zip(mrow) {
                            *o = if ok { *o - ly.exp() * s } else { 0.0 };
                        }
                    }
                    acc(*a, m);
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut m = Matrix::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        m.data[r * x.cols + start..r * x.cols + start + gi.cols].copy_from_slice(gi.row(r));
                    }
                    acc(*a, m);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols;
                        let mut m = Matrix::zeros(gi.rows, c);
                        for r in 0..gi.rows {
                            m.data[r * c..(r + 1) * c].copy_from_slice(&gi.row(r)[off..off + c]);
                        }
                        off += c;
                        acc(p, m);
                    }
                }
                Op::GatherRows(a, idx) => {
                    let x = self.value(*a);
                    let mut m = Matrix::zeros(x.rows, x.cols);
                    for (e, &i) in idx.iter().enumerate() {
                        for (o, &y) in m.data[i * x.cols..(i + 1) * x.cols].iter_mut().zip(gi.row(e)) {
                            *o += y;
                        }
                    }
                    acc(*a, m);
                }
                Op::ScatterAddRows(a, idx) => {
                    let mut data = Vec::with_capacity(idx.len() * gi.cols);
                    for &i in idx {
                        data.extend_from_slice(gi.row(i));
                    }
                    acc(*a, Matrix::from_vec(idx.len(), gi.cols, data));
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let inv = 1.0 / x.rows as f64;
                    let mut m = Matrix::zeros(x.rows, x.cols);
                    for row in m.data.chunks_mut(x.cols) {
                        for (o, &y) in row.iter_mut().zip(&gi.data) {
                            *o = y * inv;
                        }
                    }
                    acc(*a, m);
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    acc(*a, Matrix::from_vec(x.rows, x.cols, vec![gi.data[0]; x.len()]));
                }
                Op::Pick(a, r, c) => {
                    let x = self.value(*a);
                    let mut m = Matrix::zeros(x.rows, x.cols);
                    m.data[r * x.cols + c] = gi.data[0];
                    acc(*a, m);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(p, gi.clone());
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let c = xhat.cols;
                    let gam = self.value(*gamma);
                    let mut dg = Matrix::zeros(1, c);
                    let mut db = Matrix::zeros(1, c);
                    let mut dx = Matrix::zeros(xhat.rows, c);
                    #[allow(clippy::needless_range_loop)]
                    for r in 0..xhat.rows {
                        let (gr, xr) = (gi.row(r), xhat.row(r));
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..c {
                            dg.data[j] += gr[j] * xr[j];
                            db.data[j] += gr[j];
                            let d = gr[j] * gam.data[j];
                            mean_d += d;
                            mean_dx += d * xr[j];
                        }
                        mean_d /= c as f64;
                        mean_dx /= c as f64;
                        for j in 0..c {
                            let d = gr[j] * gam.data[j];
                            dx.data[r * c + j] = inv_std[r] * (d - mean_d - xr[j] * mean_dx);
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dg);
                    acc(*beta, db);
                }
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use rand::Rng as _;

    fn rand_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
    }

    /// Checks every parameter gradient of `f` against central differences.
    fn check(params: &ParamSet, f: impl Fn(&mut Tape, &ParamSet) -> Var) {
        let mut tape = Tape::new();
        let out = f(&mut tape, params);
        let grads = tape.backward(out, params.len());
        let h = 1e-6;
        for (p, m) in params.values.iter().enumerate() {
            for k in 0..m.len() {
                let eval = |delta: f64| {
                    let mut q = params.clone();
                    let mut mm = (*q.values[p]).clone();
                    mm.data[k] += delta;
                    q.values[p] = Arc::new(mm);
                    let mut t = Tape::new();
                    let o = f(&mut t, &q);
                    t.scalar(o)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads.0[p].as_ref().map_or(0.0, |g| g.data[k]);
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "param {p}[{k}]: finite difference {fd} vs analytic {an}"
                );
            }
        }
    }

    fn two_params(seed: u64, a: (usize, usize), b: (usize, usize)) -> ParamSet {
        let mut rng = Rng::new(seed);
        let mut ps = ParamSet::default();
        ps.push("a", rand_matrix(&mut rng, a.0, a.1));
        ps.push("b", rand_matrix(&mut rng, b.0, b.1));
        ps
    }

    #[test]
    fn matmul_and_elementwise() {
        let ps = two_params(1, (3, 4), (4, 2));
        check(&ps, |t, ps| {
            let (a, b) = (t.param(ps, 0), t.param(ps, 1));
            let c = t.matmul(a, b);
            let d = t.tanh(c);
            let e = t.mul(d, c);
            let f = t.sigmoid(e);
            let g = t.exp(f);
            let h = t.relu(g);
            let s = t.scale(h, 0.7);
            t.sum_all(s)
        });
    }

    #[test]
    fn transposed_products_and_rows() {
        let ps = two_params(2, (3, 4), (5, 4));
        check(&ps, |t, ps| {
            let (a, b) = (t.param(ps, 0), t.param(ps, 1));
            let c = t.matmul_t(a, b);
            let r = t.slice_cols(a, 1, 1);
            let rr = t.concat_cols(&[r, r, r, r, r]);
            let c2 = t.sub(c, rr);
            let m = t.mean_rows(b);
            let c3 = t.add_row(a, m);
            let g = t.gather_rows(c3, vec![2, 0, 2]);
            let sc = t.scatter_add_rows(g, vec![1, 1, 0], 4);
            let sr = t.scale_rows(sc, vec![0.5, 2.0, -1.0, 3.0]);
            let s1 = t.sum_all(c2);
            let s2 = t.sum_all(sr);
            let p = t.pick(c, 2, 3);
            t.sum(&[s1, s2, p])
        });
    }

    #[test]
    fn softmaxes() {
        let ps = two_params(3, (3, 5), (3, 5));
        let mask: Vec<bool> = (0..15).map(|i| i % 3 != 1).collect();
        check(&ps, move |t, ps| {
            let (a, b) = (t.param(ps, 0), t.param(ps, 1));
            let s = t.softmax(a);
            let w = t.mul(s, b);
            let l = t.log_softmax_masked(b, mask.clone());
            let p1 = t.pick(l, 0, 0);
            let p2 = t.pick(l, 2, 2);
            let sw = t.sum_all(w);
            t.sum(&[p1, p2, sw])
        });
    }

    #[test]
    fn layer_norm_gradient() {
        let mut rng = Rng::new(4);
        let mut ps = ParamSet::default();
        ps.push("x", rand_matrix(&mut rng, 3, 6));
        ps.push("g", rand_matrix(&mut rng, 1, 6));
        ps.push("b", rand_matrix(&mut rng, 1, 6));
        ps.push("w", rand_matrix(&mut rng, 3, 6));
        check(&ps, |t, ps| {
            let (x, g, b, w) = (t.param(ps, 0), t.param(ps, 1), t.param(ps, 2), t.param(ps, 3));
            let y = t.layer_norm(x, g, b);
            let z = t.mul(y, w);
            t.sum_all(z)
        });
    }

    #[test]
    fn seeded_backward_is_a_vjp() {
        let ps = two_params(5, (2, 3), (3, 2));
        let mut t = Tape::new();
        let (a, b) = (t.param(&ps, 0), t.param(&ps, 1));
        let c = t.matmul(a, b);
        let seed = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]);
        let g = t.backward_with_seed(c, seed, 2);
        let mut t2 = Tape::new();
        let (a2, b2) = (t2.param(&ps, 0), t2.param(&ps, 1));
        let c2 = t2.matmul(a2, b2);
        let p = t2.pick(c2, 0, 0);
        assert_eq!(g, t2.backward(p, 2));
    }

    #[test]
    fn masked_entries_are_neg_infinity() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::row_vector(vec![1.0, 2.0, 3.0]));
        let l = t.log_softmax_masked(x, vec![true, false, true]);
        let v = t.value(l);
        assert_eq!(v.data[1], f64::NEG_INFINITY);
        let z: f64 = [v.data[0], v.data[2]].iter().map(|p| p.exp()).sum();
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping() {
        let mut g = Grads(vec![Some(Matrix::row_vector(vec![3.0, 4.0])), None]);
        assert_eq!(g.clip(1.0), 5.0);
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }
}
