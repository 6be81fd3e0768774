//! Wengert-list reverse-mode differentiation.
//!
//! A [`Tape`] borrows the model's [`ParamStore`], records every operation of one
//! forward pass together with its output value, and walks the list backwards
//! once to produce [`Gradients`] for all parameters. Parameters never touched
//! by the forward pass receive zero gradient.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the BCE loss.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    IndexAxis {
        x: Var,
        axis: usize,
        index: usize,
    },
    Columns {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Mse {
        pred: Var,
        target: Tensor,
        row_weights: Option<Vec<f64>>,
    },
    Bce {
        pred: Var,
        labels: Tensor,
        pos_weight: f64,
    },
}

struct Node {
    op: Op,
    // `None` for parameter leaves, which read straight from the store.
    value: Option<Tensor>,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    consumed: bool,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            consumed: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input (no gradient flows out of the tape for it).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value)
    }

    /// Leaf for a stored parameter; repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?))
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.value(x);
        let bs = self.value(b);
        let n = *xs.shape().last().unwrap();
        if bs.len() != n {
            return Err(Error::shape("add_bias", format!("{:?} + {:?}", xs.shape(), bs.shape())));
        }
        let mut out = xs.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bs.data()) {
                *o += bv;
            }
        }
        Ok(self.push(Op::AddBias(x, b), out))
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(Op::Scale(x, factor), out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), out)
    }

    /// Batched 1D cross-correlation: `x [B, C_in, L]`, `w [C_out, C_in, K]`,
    /// `b [C_out]` gives `[B, C_out, (L + 2*pad - K) / stride + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let bs = self.value(b).shape().to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || bs != [ws[0]] || stride == 0 {
            return Err(Error::shape(
                "conv1d",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?}, stride {stride}"),
            ));
        }
        let geo = ConvGeometry::new(xs[0], xs[1], xs[2], ws[0], ws[2], stride, pad)?;
        let out = geo.forward(self.value(x).data(), self.value(w).data(), self.value(b).data());
        let t = Tensor::new(vec![geo.batch, geo.c_out, geo.l_out], out)?;
        Ok(self.push(Op::Conv1d { x, w, b, stride, pad }, t))
    }

    /// Drops `axis` (1 or 2) of a rank-3 value by picking `index` along it.
    pub fn index_axis(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 3 || !(1..=2).contains(&axis) || index >= s[axis] {
            return Err(Error::shape(
                "index_axis",
                format!("shape {s:?}, axis {axis}, index {index}"),
            ));
        }
        let src = self.value(x).data();
        let (a, b, c) = (s[0], s[1], s[2]);
        let (out, shape) = if axis == 1 {
            let mut out = Vec::with_capacity(a * c);
            for i in 0..a {
                out.extend_from_slice(&src[(i * b + index) * c..(i * b + index + 1) * c]);
            }
            (out, vec![a, c])
        } else {
            let mut out = Vec::with_capacity(a * b);
            for i in 0..a {
                for j in 0..b {
                    out.push(src[(i * b + j) * c + index]);
                }
            }
            (out, vec![a, b])
        };
        Ok(self.push(Op::IndexAxis { x, axis, index }, Tensor::new(shape, out)?))
    }

    /// Columns `start..start+len` of a rank-2 value.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 2 || start + len > s[1] || len == 0 {
            return Err(Error::shape("columns", format!("shape {s:?}, {start}..{}", start + len)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(s[0] * len);
        for row in src.chunks(s[1]) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.push(Op::Columns { x, start }, Tensor::new(vec![s[0], len], out)?))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), t))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.mse_weighted(pred, target, None)
    }

    /// `sum_r w_r * sum_c (pred - target)^2 / numel` for a rank-2 `pred`.
    /// With all weights one this is the plain mean squared error.
    pub fn mse_weighted(
        &mut self,
        pred: Var,
        target: &Tensor,
        row_weights: Option<&[f64]>,
    ) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::shape("mse", format!("{:?} vs {:?}", p.shape(), target.shape())));
        }
        let n = p.len();
        let row_len = match row_weights {
            Some(w) => {
                if p.rank() != 2 || w.len() != p.shape()[0] {
                    return Err(Error::shape(
                        "mse",
                        format!("{} row weights for shape {:?}", w.len(), p.shape()),
                    ));
                }
                p.shape()[1]
            }
            None => n,
        };
        let mut total = 0.0;
        for (r, (pr, tr)) in p.data().chunks(row_len).zip(target.data().chunks(row_len)).enumerate() {
            let w = row_weights.map_or(1.0, |w| w[r]);
            let s: f64 = pr.iter().zip(tr).map(|(a, b)| (a - b) * (a - b)).sum();
            total += w * s;
        }
        let out = Tensor::scalar(total / n as f64);
        Ok(self.push(
            Op::Mse {
                pred,
                target: target.clone(),
                row_weights: row_weights.map(<[f64]>::to_vec),
            },
            out,
        ))
    }

    /// Class-balanced binary cross-entropy, averaged over elements.
    pub fn weighted_bce(&mut self, pred: Var, labels: &Tensor, pos_weight: f64) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != labels.shape() {
            return Err(Error::shape("bce", format!("{:?} vs {:?}", p.shape(), labels.shape())));
        }
        if !(pos_weight > 0.0) {
            return Err(Error::InvalidArgument(format!("pos_weight must be > 0, got {pos_weight}")));
        }
        let loss = bce_value(p.data(), labels.data(), pos_weight);
        Ok(self.push(
            Op::Bce {
                pred,
                labels: labels.clone(),
                pos_weight,
            },
            Tensor::scalar(loss),
        ))
    }

    /// Reverse pass from the scalar `loss`. May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        let ls = self.value(loss).shape();
        if ls.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(ls.to_vec()));
        }
        self.consumed = true;

        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => out.get_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, 0.0);
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                    accumulate(&mut grads, *a, Tensor::new(vec![m, k], da)?);
                    accumulate(&mut grads, *b, Tensor::new(vec![k, n], db)?);
                }
                Op::AddBias(x, b) => {
                    let n = self.value(*b).len();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    let bshape = self.value(*b).shape().to_vec();
                    accumulate(&mut grads, *b, Tensor::new(bshape, db)?);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |g, v| g * v);
                    let gb = zip_map(&g, self.value(*a), |g, v| g * v);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(x, f) => {
                    let f = *f;
                    accumulate(&mut grads, *x, g.map(|v| v * f));
                }
                Op::Sigmoid(x) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let gx = zip_map(&g, y, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let gx = zip_map(&g, y, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let y = self.nodes[i].value.as_ref().unwrap();
                    let gx = zip_map(&g, y, |g, y| if y > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Conv1d { x, w, b, stride, pad } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (xs, ws) = (xv.shape(), wv.shape());
                    let geo = ConvGeometry::new(xs[0], xs[1], xs[2], ws[0], ws[2], *stride, *pad)?;
                    let (dx, dw, db) = geo.backward(xv.data(), wv.data(), g.data());
                    let (xs, ws, bs) = (xs.to_vec(), ws.to_vec(), self.value(*b).shape().to_vec());
                    accumulate(&mut grads, *x, Tensor::new(xs, dx)?);
                    accumulate(&mut grads, *w, Tensor::new(ws, dw)?);
                    accumulate(&mut grads, *b, Tensor::new(bs, db)?);
                }
                Op::IndexAxis { x, axis, index } => {
                    let s = self.value(*x).shape().to_vec();
                    let (a, b, c) = (s[0], s[1], s[2]);
                    let mut dx = vec![0.0; a * b * c];
                    let gd = g.data();
                    if *axis == 1 {
                        for r in 0..a {
                            let dst = (r * b + index) * c;
                            dx[dst..dst + c].copy_from_slice(&gd[r * c..(r + 1) * c]);
                        }
                    } else {
                        for r in 0..a {
                            for j in 0..b {
                                dx[(r * b + j) * c + index] = gd[r * b + j];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::new(s, dx)?);
                }
                Op::Columns { x, start } => {
                    let s = self.value(*x).shape().to_vec();
                    let len = g.shape()[1];
                    let mut dx = vec![0.0; s[0] * s[1]];
                    for (dst, src) in dx.chunks_mut(s[1]).zip(g.data().chunks(len)) {
                        dst[*start..*start + len].copy_from_slice(src);
                    }
                    accumulate(&mut grads, *x, Tensor::new(s, dx)?);
                }
                Op::Reshape(x) => {
                    let s = self.value(*x).shape().to_vec();
                    accumulate(&mut grads, *x, g.reshaped(s)?);
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    let s = self.value(*x).shape().to_vec();
                    accumulate(&mut grads, *x, Tensor::filled(&s, gv));
                }
                Op::Mse {
                    pred,
                    target,
                    row_weights,
                } => {
                    let p = self.value(*pred);
                    let n = p.len() as f64;
                    let row_len = if row_weights.is_some() { p.shape()[1] } else { p.len() };
                    let scale = 2.0 * g.item() / n;
                    let mut dp = Vec::with_capacity(p.len());
                    for (r, (pr, tr)) in
                        p.data().chunks(row_len).zip(target.data().chunks(row_len)).enumerate()
                    {
                        let w = row_weights.as_ref().map_or(1.0, |w| w[r]);
                        dp.extend(pr.iter().zip(tr).map(|(a, b)| scale * w * (a - b)));
                    }
                    let s = p.shape().to_vec();
                    accumulate(&mut grads, *pred, Tensor::new(s, dp)?);
                }
                Op::Bce {
                    pred,
                    labels,
                    pos_weight,
                } => {
                    let p = self.value(*pred);
                    let n = p.len() as f64;
                    let gv = g.item();
                    let dp: Vec<f64> = p
                        .data()
                        .iter()
                        .zip(labels.data())
                        .map(|(&p, &y)| {
                            if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                                0.0
                            } else {
                                -gv / n * (pos_weight * y / p - (1.0 - y) / (1.0 - p))
                            }
                        })
                        .collect();
                    let s = p.shape().to_vec();
                    accumulate(&mut grads, *pred, Tensor::new(s, dp)?);
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn bce_value(pred: &[f64], labels: &[f64], pos_weight: f64) -> f64 {
    let n = pred.len() as f64;
    let s: f64 = pred
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    -s / n
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// `c = op(a) * op(b) + beta * c` with `op(a)` of logical shape `m x k` and
/// `op(b)` of shape `k x n`. Transposed operands are stored as `k x m` / `n x k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    let av = if a_t {
        ArrayView2::from_shape((k, m), a).expect("gemm a").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm a")
    };
    let bv = if b_t {
        ArrayView2::from_shape((n, k), b).expect("gemm b").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm b")
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("gemm c");
    general_mat_mul(1.0, &av, &bv, beta, &mut cv);
}

/// Index bookkeeping for the im2col formulation of conv1d.
struct ConvGeometry {
    batch: usize,
    c_in: usize,
    l_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    l_out: usize,
}

impl ConvGeometry {
    fn new(
        batch: usize,
        c_in: usize,
        l_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let padded = l_in + 2 * pad;
        if padded < k {
            return Err(Error::shape(
                "conv1d",
                format!("input length {l_in} with padding {pad} shorter than kernel {k}"),
            ));
        }
        Ok(Self {
            batch,
            c_in,
            l_in,
            c_out,
            k,
            stride,
            pad,
            l_out: (padded - k) / stride + 1,
        })
    }

    /// Input position feeding output `o` through tap `kk`, if inside the signal.
    #[inline]
    fn src(&self, o: usize, kk: usize) -> Option<usize> {
        let p = o * self.stride + kk;
        (p >= self.pad && p - self.pad < self.l_in).then(|| p - self.pad)
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        for ci in 0..self.c_in {
            let xrow = &x[ci * self.l_in..(ci + 1) * self.l_in];
            for kk in 0..self.k {
                let crow = &mut cols[(ci * self.k + kk) * self.l_out..(ci * self.k + kk + 1) * self.l_out];
                for (o, c) in crow.iter_mut().enumerate() {
                    *c = self.src(o, kk).map_or(0.0, |p| xrow[p]);
                }
            }
        }
    }

    fn forward(&self, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let ck = self.c_in * self.k;
        let mut cols = vec![0.0; ck * self.l_out];
        let mut out = vec![0.0; self.batch * self.c_out * self.l_out];
        for bi in 0..self.batch {
            self.im2col(&x[bi * self.c_in * self.l_in..(bi + 1) * self.c_in * self.l_in], &mut cols);
            let o = &mut out[bi * self.c_out * self.l_out..(bi + 1) * self.c_out * self.l_out];
            for (co, row) in o.chunks_mut(self.l_out).enumerate() {
                row.fill(b[co]);
            }
            gemm(self.c_out, ck, self.l_out, w, false, &cols, false, o, 1.0);
        }
        out
    }

    fn backward(&self, x: &[f64], w: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let ck = self.c_in * self.k;
        let mut cols = vec![0.0; ck * self.l_out];
        let mut dcols = vec![0.0; ck * self.l_out];
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; self.c_out];
        for bi in 0..self.batch {
            let xin = &x[bi * self.c_in * self.l_in..(bi + 1) * self.c_in * self.l_in];
            let gb = &g[bi * self.c_out * self.l_out..(bi + 1) * self.c_out * self.l_out];
            self.im2col(xin, &mut cols);
            for (co, row) in gb.chunks(self.l_out).enumerate() {
                db[co] += row.iter().sum::<f64>();
            }
            // dW += G * cols^T ; dcols = W^T * G
            gemm(self.c_out, self.l_out, ck, gb, false, &cols, true, &mut dw, 1.0);
            gemm(ck, self.c_out, self.l_out, w, true, gb, false, &mut dcols, 0.0);
            let dxb = &mut dx[bi * self.c_in * self.l_in..(bi + 1) * self.c_in * self.l_in];
            for ci in 0..self.c_in {
                for kk in 0..self.k {
                    let crow = &dcols[(ci * self.k + kk) * self.l_out..(ci * self.k + kk + 1) * self.l_out];
                    for (o, &d) in crow.iter().enumerate() {
                        if let Some(p) = self.src(o, kk) {
                            dxb[ci * self.l_in + p] += d;
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }
}
