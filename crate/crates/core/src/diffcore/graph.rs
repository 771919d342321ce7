//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every primitive as it is evaluated. Node inputs always
//! have smaller indices than the node itself, so the tape order is a
//! topological order and [`Graph::backward`] is a single reverse sweep.
//!
//! The primitive set is deliberately narrow: the linear algebra and
//! densities needed by the factor model, fused where a fused kernel is much
//! cheaper than its composition (Gaussian log-density, reparameterized
//! sampling, RBF factor construction).

use std::sync::Arc;

use super::tensor::{matmul_a_bt, matmul_at_b, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied to every log-scale before exponentiation.
pub const LOG_SCALE_MIN: f64 = -8.0;
/// Upper clamp applied to every log-scale before exponentiation.
pub const LOG_SCALE_MAX: f64 = 8.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Sum(Var),
    Prelu(Var, Var),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>),
    GaussianLogPdf { x: Var, mu: Var, log_sigma: Var },
    LinearGaussianLogPdf { y: Var, w: Var, f: Var, log_sigma: Var },
    Reparam { mu: Var, log_sigma: Var, eps: Vec<f64> },
    Rbf { centers: Var, log_widths: Var, grid: Arc<Tensor> },
    LogSumExp(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// How a parameter tensor lines up against a data tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Full,
    Row,
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, data: &Tensor, param: &Tensor) -> Result<Self> {
        if param.len() == data.len() {
            Ok(Broadcast::Full)
        } else if param.len() == 1 {
            Ok(Broadcast::Scalar)
        } else if param.len() == data.cols() {
            Ok(Broadcast::Row)
        } else {
            Err(Error::dim(
                op,
                format!("cannot broadcast {:?} against {:?}", param.shape(), data.shape()),
            ))
        }
    }

    #[inline]
    fn index(self, i: usize, cols: usize) -> usize {
        match self {
            Broadcast::Full => i,
            Broadcast::Row => i % cols,
            Broadcast::Scalar => 0,
        }
    }
}

#[inline]
fn clamp_log_scale(ls: f64) -> (f64, bool) {
    if ls < LOG_SCALE_MIN {
        (LOG_SCALE_MIN, false)
    } else if ls > LOG_SCALE_MAX {
        (LOG_SCALE_MAX, false)
    } else {
        (ls, true)
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf backed by shared storage; the tensor is not copied.
    pub fn leaf_shared(&mut self, value: Arc<Tensor>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Data that never receives a gradient.
    pub fn constant(&mut self, value: Arc<Tensor>) -> Var {
        self.nodes.push(Node { value, op: Op::Constant });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let cols = tx.cols();
        if tr.len() != cols {
            return Err(Error::dim(
                "add_row",
                format!("{:?} + row {:?}", tx.shape(), tr.shape()),
            ));
        }
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tr.data()[i % cols])
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn offset(&mut self, x: Var, shift: f64) -> Var {
        let out = self.value(x).map(|v| v + shift);
        self.push(out, Op::Offset(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Sum of several scalar nodes.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let stacked = self.concat(terms)?;
        Ok(self.sum(stacked))
    }

    /// Parametric ReLU with a single scalar slope node.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.value(slope).len() != 1 {
            return Err(Error::dim("prelu", "slope must be a scalar"));
        }
        let a = self.scalar_value(slope);
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { a * v });
        Ok(self.push(out, Op::Prelu(x, slope)))
    }

    /// Selects `indices` from the flattened input into a tensor of `shape`.
    pub fn gather(&mut self, x: Var, indices: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let src = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.len()) {
            return Err(Error::dim(
                "gather",
                format!("index {} out of range for {} values", bad, src.len()),
            ));
        }
        let data = indices.iter().map(|&i| src.data()[i]).collect();
        let out = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(out, Op::Gather(x, indices)))
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no inputs"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Sum of Normal log-densities of `x` under mean `mu` and log-scale
    /// `log_sigma`. The parameters may match `x` elementwise, be one value per
    /// column (broadcast over rows), or be a single scalar.
    pub fn gaussian_logpdf(&mut self, x: Var, mu: Var, log_sigma: Var) -> Result<Var> {
        let (tx, tm, ts) = (self.value(x), self.value(mu), self.value(log_sigma));
        let bm = Broadcast::resolve("gaussian_logpdf", tx, tm)?;
        let bs = Broadcast::resolve("gaussian_logpdf", tx, ts)?;
        let cols = tx.cols();
        let (ls_c, inv_var): (Vec<f64>, Vec<f64>) = ts
            .data()
            .iter()
            .map(|&ls| {
                let (c, _) = clamp_log_scale(ls);
                (c, (-2.0 * c).exp())
            })
            .unzip();
        let mut total = 0.0;
        for (i, &xv) in tx.data().iter().enumerate() {
            let r = xv - tm.data()[bm.index(i, cols)];
            let j = bs.index(i, cols);
            total += -HALF_LN_2PI - ls_c[j] - 0.5 * r * r * inv_var[j];
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::GaussianLogPdf { x, mu, log_sigma },
        ))
    }

    /// Sum of Normal log-densities of `y (T×V)` under mean `w (T×K) · f (K×V)`
    /// and one scalar log-scale, without materializing the mean.
    pub fn linear_gaussian_logpdf(&mut self, y: Var, w: Var, f: Var, log_sigma: Var) -> Result<Var> {
        let (ty, tw, tf, ts) = (self.value(y), self.value(w), self.value(f), self.value(log_sigma));
        let (t, k, v) = (tw.rows(), tw.cols(), tf.cols());
        if tw.shape().len() != 2 || tf.shape().len() != 2 || tf.rows() != k || ty.rows() != t || ty.cols() != v || ty.len() != t * v {
            return Err(Error::dim(
                "log_likelihood",
                format!("Y {:?} vs W {:?} · F {:?}", ty.shape(), tw.shape(), tf.shape()),
            ));
        }
        if ts.len() != 1 {
            return Err(Error::dim("log_likelihood", format!("log_sigma {:?} must be scalar", ts.shape())));
        }
        let (ls, _) = clamp_log_scale(ts.item());
        let inv_var = (-2.0 * ls).exp();
        let mut row = vec![0.0; v];
        let mut ss = 0.0;
        for tt in 0..t {
            residual_row(ty.row(tt), tw.row(tt), tf.data(), &mut row);
            ss += row.iter().map(|r| r * r).sum::<f64>();
        }
        let n = (t * v) as f64;
        let total = -0.5 * ss * inv_var - n * (ls + HALF_LN_2PI);
        Ok(self.push(
            Tensor::scalar(total),
            Op::LinearGaussianLogPdf { y, w, f, log_sigma },
        ))
    }

    /// `mu + exp(log_sigma) * eps` with `eps` held fixed.
    pub fn reparam_sample(&mut self, mu: Var, log_sigma: Var, eps: Vec<f64>) -> Result<Var> {
        let (tm, ts) = (self.value(mu), self.value(log_sigma));
        if tm.len() != ts.len() || tm.len() != eps.len() {
            return Err(Error::dim(
                "reparam_sample",
                format!("mu {} log_sigma {} eps {}", tm.len(), ts.len(), eps.len()),
            ));
        }
        let data = tm
            .data()
            .iter()
            .zip(ts.data())
            .zip(&eps)
            .map(|((&m, &ls), &e)| m + clamp_log_scale(ls).0.exp() * e)
            .collect();
        let out = Tensor::new(tm.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Reparam { mu, log_sigma, eps }))
    }

    /// Radial basis factors `F[k, v] = exp(-|grid_v - center_k|^2 / exp(log_width_k))`.
    pub fn rbf(&mut self, centers: Var, log_widths: Var, grid: Arc<Tensor>) -> Result<Var> {
        let (tc, tw) = (self.value(centers), self.value(log_widths));
        let k = tw.len();
        if tc.len() != 3 * k || grid.cols() != 3 {
            return Err(Error::dim(
                "rbf",
                format!(
                    "centers {:?}, widths {:?}, grid {:?}",
                    tc.shape(),
                    tw.shape(),
                    grid.shape()
                ),
            ));
        }
        let out = rbf_values(tc.data(), tw.data(), &grid);
        Ok(self.push(
            out,
            Op::Rbf {
                centers,
                log_widths,
                grid,
            },
        ))
    }

    pub fn log_sum_exp(&mut self, x: Var) -> Var {
        let v = log_sum_exp(self.value(x).data());
        self.push(Tensor::scalar(v), Op::LogSumExp(x))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        if !root_value.item().is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite root value {}",
                root_value.item()
            )));
        }

        let n = root.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }

        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                accumulate(grads, *a, ta, |buf| matmul_a_bt(gd, tb.data(), buf, m, n, k));
                accumulate(grads, *b, tb, |buf| matmul_at_b(ta.data(), gd, buf, m, k, n));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, self.value(*a), |buf| add_into(buf, gd, 1.0));
                accumulate(grads, *b, self.value(*b), |buf| add_into(buf, gd, 1.0));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, self.value(*a), |buf| add_into(buf, gd, 1.0));
                accumulate(grads, *b, self.value(*b), |buf| add_into(buf, gd, -1.0));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, ta, |buf| {
                    for ((o, &gv), &bv) in buf.iter_mut().zip(gd).zip(tb.data()) {
                        *o += gv * bv;
                    }
                });
                accumulate(grads, *b, tb, |buf| {
                    for ((o, &gv), &av) in buf.iter_mut().zip(gd).zip(ta.data()) {
                        *o += gv * av;
                    }
                });
            }
            Op::AddRow(x, row) => {
                let tr = self.value(*row);
                let cols = tr.len();
                accumulate(grads, *x, self.value(*x), |buf| add_into(buf, gd, 1.0));
                accumulate(grads, *row, tr, |buf| {
                    for (i, &gv) in gd.iter().enumerate() {
                        buf[i % cols] += gv;
                    }
                });
            }
            Op::Scale(x, f) => {
                accumulate(grads, *x, self.value(*x), |buf| add_into(buf, gd, *f));
            }
            Op::Offset(x) => {
                accumulate(grads, *x, self.value(*x), |buf| add_into(buf, gd, 1.0));
            }
            Op::Exp(x) => {
                let out = node.value.data();
                accumulate(grads, *x, self.value(*x), |buf| {
                    for ((o, &gv), &y) in buf.iter_mut().zip(gd).zip(out) {
                        *o += gv * y;
                    }
                });
            }
            Op::Sum(x) => {
                let s = gd[0];
                accumulate(grads, *x, self.value(*x), |buf| buf.iter_mut().for_each(|o| *o += s));
            }
            Op::Prelu(x, slope) => {
                let tx = self.value(*x);
                let a = self.scalar_value(*slope);
                accumulate(grads, *x, tx, |buf| {
                    for ((o, &gv), &xv) in buf.iter_mut().zip(gd).zip(tx.data()) {
                        *o += if xv >= 0.0 { gv } else { a * gv };
                    }
                });
                let da: f64 = gd
                    .iter()
                    .zip(tx.data())
                    .filter(|(_, &xv)| xv < 0.0)
                    .map(|(&gv, &xv)| gv * xv)
                    .sum();
                accumulate(grads, *slope, self.value(*slope), |buf| buf[0] += da);
            }
            Op::Gather(x, indices) => {
                accumulate(grads, *x, self.value(*x), |buf| {
                    for (&src, &gv) in indices.iter().zip(gd) {
                        buf[src] += gv;
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let len = tp.len();
                    accumulate(grads, p, tp, |buf| add_into(buf, &gd[offset..offset + len], 1.0));
                    offset += len;
                }
            }
            Op::GaussianLogPdf { x, mu, log_sigma } => {
                self.gaussian_backward(gd[0], *x, *mu, *log_sigma, grads)?;
            }
            Op::LinearGaussianLogPdf { y, w, f, log_sigma } => {
                self.linear_gaussian_backward(gd[0], *y, *w, *f, *log_sigma, grads);
            }
            Op::Reparam { mu, log_sigma, eps } => {
                let ts = self.value(*log_sigma);
                accumulate(grads, *mu, self.value(*mu), |buf| add_into(buf, gd, 1.0));
                accumulate(grads, *log_sigma, ts, |buf| {
                    for (((o, &gv), &ls), &e) in buf.iter_mut().zip(gd).zip(ts.data()).zip(eps) {
                        let (c, active) = clamp_log_scale(ls);
                        if active {
                            *o += gv * c.exp() * e;
                        }
                    }
                });
            }
            Op::Rbf {
                centers,
                log_widths,
                grid,
            } => {
                let (tc, tw) = (self.value(*centers), self.value(*log_widths));
                let f = node.value.data();
                let (k, v) = (tw.len(), grid.rows());
                let mut dc = vec![0.0; 3 * k];
                let mut dw = vec![0.0; k];
                for kk in 0..k {
                    let inv_w = (-tw.data()[kk]).exp();
                    let c = &tc.data()[3 * kk..3 * kk + 3];
                    for vv in 0..v {
                        let s = gd[kk * v + vv] * f[kk * v + vv];
                        if s == 0.0 {
                            continue;
                        }
                        let gp = grid.row(vv);
                        let mut d2 = 0.0;
                        for d in 0..3 {
                            let diff = gp[d] - c[d];
                            d2 += diff * diff;
                            dc[3 * kk + d] += s * 2.0 * diff * inv_w;
                        }
                        dw[kk] += s * d2 * inv_w;
                    }
                }
                accumulate(grads, *centers, tc, |buf| add_into(buf, &dc, 1.0));
                accumulate(grads, *log_widths, tw, |buf| add_into(buf, &dw, 1.0));
            }
            Op::LogSumExp(x) => {
                let tx = self.value(*x);
                let lse = node.value.item();
                let s = gd[0];
                accumulate(grads, *x, tx, |buf| {
                    for (o, &xv) in buf.iter_mut().zip(tx.data()) {
                        *o += s * (xv - lse).exp();
                    }
                });
            }
        }
        Ok(())
    }

    fn gaussian_backward(
        &self,
        upstream: f64,
        x: Var,
        mu: Var,
        log_sigma: Var,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let (tx, tm, ts) = (self.value(x), self.value(mu), self.value(log_sigma));
        let bm = Broadcast::resolve("gaussian_logpdf", tx, tm)?;
        let bs = Broadcast::resolve("gaussian_logpdf", tx, ts)?;
        let cols = tx.cols();
        let params: Vec<(f64, bool)> = ts
            .data()
            .iter()
            .map(|&ls| {
                let (c, active) = clamp_log_scale(ls);
                ((-2.0 * c).exp(), active)
            })
            .collect();

        let mut dx = vec![0.0; tx.len()];
        let mut dm = vec![0.0; tm.len()];
        let mut ds = vec![0.0; ts.len()];
        for (i, &xv) in tx.data().iter().enumerate() {
            let im = bm.index(i, cols);
            let is = bs.index(i, cols);
            let (inv_var, active) = params[is];
            let r = xv - tm.data()[im];
            let d = upstream * r * inv_var;
            dx[i] -= d;
            dm[im] += d;
            if active {
                ds[is] += upstream * (r * r * inv_var - 1.0);
            }
        }
        if !self.is_constant(x) {
            accumulate(grads, x, tx, |buf| add_into(buf, &dx, 1.0));
        }
        accumulate(grads, mu, tm, |buf| add_into(buf, &dm, 1.0));
        accumulate(grads, log_sigma, ts, |buf| add_into(buf, &ds, 1.0));
        Ok(())
    }

    fn linear_gaussian_backward(&self, upstream: f64, y: Var, w: Var, f: Var, log_sigma: Var, grads: &mut [Option<Tensor>]) {
        let (ty, tw, tf, ts) = (self.value(y), self.value(w), self.value(f), self.value(log_sigma));
        let (t, k, v) = (tw.rows(), tw.cols(), tf.cols());
        let (ls, active) = clamp_log_scale(ts.item());
        let scale = upstream * (-2.0 * ls).exp();
        let mut dw = vec![0.0; t * k];
        let mut df = vec![0.0; k * v];
        let mut dy = if self.is_constant(y) { None } else { Some(vec![0.0; t * v]) };
        let mut row = vec![0.0; v];
        let mut ss = 0.0;
        for tt in 0..t {
            residual_row(ty.row(tt), tw.row(tt), tf.data(), &mut row);
            ss += row.iter().map(|r| r * r).sum::<f64>();
            let w_row = tw.row(tt);
            for kk in 0..k {
                let f_row = &tf.data()[kk * v..(kk + 1) * v];
                dw[tt * k + kk] = scale * row.iter().zip(f_row).map(|(r, fv)| r * fv).sum::<f64>();
                let c = scale * w_row[kk];
                if c != 0.0 {
                    for (o, r) in df[kk * v..(kk + 1) * v].iter_mut().zip(&row) {
                        *o += c * r;
                    }
                }
            }
            if let Some(dy) = dy.as_mut() {
                add_into(&mut dy[tt * v..(tt + 1) * v], &row, -scale);
            }
        }
        if let Some(dy) = dy {
            accumulate(grads, y, ty, |buf| add_into(buf, &dy, 1.0));
        }
        accumulate(grads, w, tw, |buf| add_into(buf, &dw, 1.0));
        accumulate(grads, f, tf, |buf| add_into(buf, &df, 1.0));
        if active {
            let n = (t * v) as f64;
            let ds = upstream * (ss * (-2.0 * ls).exp() - n);
            accumulate(grads, log_sigma, ts, |buf| buf[0] += ds);
        }
    }

    fn is_constant(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Constant)
    }
}

/// `out = y_row - w_row · f` for one time point.
fn residual_row(y_row: &[f64], w_row: &[f64], f: &[f64], out: &mut [f64]) {
    let v = out.len();
    out.copy_from_slice(y_row);
    for (kk, &wk) in w_row.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        for (o, &fv) in out.iter_mut().zip(&f[kk * v..(kk + 1) * v]) {
            *o -= wk * fv;
        }
    }
}

fn add_into(buf: &mut [f64], src: &[f64], factor: f64) {
    for (o, &s) in buf.iter_mut().zip(src) {
        *o += factor * s;
    }
}

fn accumulate(
    grads: &mut [Option<Tensor>],
    v: Var,
    like: &Tensor,
    f: impl FnOnce(&mut [f64]),
) {
    let slot = &mut grads[v.0];
    let buf = slot.get_or_insert_with(|| Tensor::zeros(like.shape()));
    f(buf.data_mut());
}

fn rbf_values(centers: &[f64], log_widths: &[f64], grid: &Tensor) -> Tensor {
    let (k, v) = (log_widths.len(), grid.rows());
    let mut out = vec![0.0; k * v];
    for kk in 0..k {
        let inv_w = (-log_widths[kk]).exp();
        let c = &centers[3 * kk..3 * kk + 3];
        for vv in 0..v {
            let gp = grid.row(vv);
            let d2: f64 = (0..3).map(|d| (gp[d] - c[d]).powi(2)).sum();
            out[kk * v + vv] = (-d2 * inv_w).exp();
        }
    }
    Tensor::new(vec![k, v], out).expect("rbf shape")
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Gradients from one reverse sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` is not on any path to the root.
    pub fn try_get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`; zeros shaped like the node when `v` does not feed the root.
    pub fn get(&self, graph: &Graph, v: Var) -> Tensor {
        self.try_get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()))
    }
}
