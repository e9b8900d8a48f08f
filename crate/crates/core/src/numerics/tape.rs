//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Each operation appends a node holding its forward value and the handles of
//! its inputs. Since inputs always exist before the node that consumes them,
//! the tape is topologically ordered by construction and [`Tape::backward`]
//! is a single reverse sweep.

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    CosineRows(Var, Var),
    Pick(Var, Vec<usize>),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    EmbedSum(Var, Vec<Vec<usize>>),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of primitive operations for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, zeros when the output does not depend on it.
    pub fn get_or_zero(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| self.get_or_zero(v)).collect()
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (av.rows(), av.cols(), bv.rows(), bv.cols());
        if k != k2 {
            return shape_err("matmul", format!("[{m}, {k}] x [{k2}, {n}]"));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(op_name, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    /// Adds a `[1, n]` row to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return shape_err("add_row", format!("{:?} + row {:?}", av.shape(), rv.shape()));
        }
        let n = av.cols();
        let mut data = av.data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, &b) in chunk.iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Ln(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_cols", "no inputs");
        };
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return shape_err("concat_cols", format!("row count {} vs {}", v.rows(), rows));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if len == 0 || start + len > av.cols() {
            return shape_err("slice_cols", format!("[{start}, {}) of {} columns", start + len, av.cols()));
        }
        let rows = av.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&av.row_slice(r)[start..start + len]);
        }
        Ok(self.push(Tensor::matrix(rows, len, data)?, Op::SliceCols(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = av.data()[i * n + j];
            }
        }
        let value = Tensor::matrix(n, m, data).expect("transpose keeps element count");
        self.push(value, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape).or_else(|_| {
            shape_err("reshape", format!("{:?} -> {:?}", self.value(a).shape(), shape))
        })?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.cols();
        let mut data = vec![0.0; av.len()];
        for (row, out) in av.data().chunks(n).zip(data.chunks_mut(n)) {
            softmax_row(row, out);
        }
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.cols();
        let mut data = vec![0.0; av.len()];
        for (row, out) in av.data().chunks(n).zip(data.chunks_mut(n)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for (o, &x) in out.iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::LogSoftmaxRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.sum() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Cosine similarity of every query row against every key row: `[m, d] x [n, d] -> [m, n]`.
    /// A pair involving a zero-norm vector has similarity 0.
    pub fn cosine_rows(&mut self, queries: Var, keys: Var) -> Result<Var> {
        let (qv, kv) = (self.value(queries), self.value(keys));
        if qv.cols() != kv.cols() {
            return shape_err("cosine_rows", format!("{:?} vs {:?}", qv.shape(), kv.shape()));
        }
        let (m, n) = (qv.rows(), kv.rows());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let q = qv.row_slice(i);
            let qn = norm(q);
            for j in 0..n {
                let k = kv.row_slice(j);
                let kn = norm(k);
                if qn > 0.0 && kn > 0.0 {
                    let dot: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
                    data[i * n + j] = dot / (qn * kn);
                }
            }
        }
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::CosineRows(queries, keys)))
    }

    /// Picks `a[i, idx[i]]` for each row, producing `[m, 1]`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if idx.len() != av.rows() || idx.iter().any(|&i| i >= av.cols()) {
            return shape_err("pick", format!("{} indices into {:?}", idx.len(), av.shape()));
        }
        let data = idx.iter().enumerate().map(|(r, &c)| av.at(r, c)).collect::<Vec<_>>();
        let value = Tensor::matrix(idx.len(), 1, data)?;
        Ok(self.push(value, Op::Pick(a, idx.to_vec())))
    }

    /// `out[b] = sum_{j in rows[b]} weight[j]`: an affine map applied to a
    /// multi-hot input given by its active indices.
    pub fn embed_sum(&mut self, weight: Var, rows: &[Vec<usize>]) -> Result<Var> {
        let wv = self.value(weight);
        let (v, h) = (wv.rows(), wv.cols());
        if rows.is_empty() {
            return shape_err("embed_sum", "empty batch");
        }
        let mut data = vec![0.0; rows.len() * h];
        for (b, active) in rows.iter().enumerate() {
            let out = &mut data[b * h..(b + 1) * h];
            for &j in active {
                if j >= v {
                    return shape_err("embed_sum", format!("index {j} out of {v} rows"));
                }
                for (o, &w) in out.iter_mut().zip(wv.row_slice(j)) {
                    *o += w;
                }
            }
        }
        let value = Tensor::matrix(rows.len(), h, data)?;
        Ok(self.push(value, Op::EmbedSum(weight, rows.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if idx.is_empty() || idx.iter().any(|&i| i >= av.rows()) {
            return shape_err("gather_rows", format!("{idx:?} of {} rows", av.rows()));
        }
        let mut data = Vec::with_capacity(idx.len() * av.cols());
        for &i in idx {
            data.extend_from_slice(av.row_slice(i));
        }
        let value = Tensor::matrix(idx.len(), av.cols(), data)?;
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec())))
    }

    /// `x W + b` for a batch of rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_val = self.value(output);
        if out_val.len() != 1 {
            return Err(Error::NonScalarOutput(out_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::filled(out_val.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, delta: Tensor| {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let y = &node.value;
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut ga = vec![0.0; m * k];
                gemm_nt_acc(gd, bv.data(), &mut ga, m, n, k);
                let mut gb = vec![0.0; k * n];
                gemm_tn_acc(av.data(), gd, &mut gb, m, k, n);
                acc(*a, Tensor::new(av.shape().to_vec(), ga)?);
                acc(*b, Tensor::new(bv.shape().to_vec(), gb)?);
            }
            Op::Add(a, b) => {
                acc(*a, g.reshaped(self.value(*a).shape())?);
                acc(*b, g.reshaped(self.value(*b).shape())?);
            }
            Op::Sub(a, b) => {
                acc(*a, g.reshaped(self.value(*a).shape())?);
                acc(*b, g.map(|x| -x).reshaped(self.value(*b).shape())?);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = gd.iter().zip(bv.data()).map(|(g, b)| g * b).collect();
                let gb = gd.iter().zip(av.data()).map(|(g, a)| g * a).collect();
                acc(*a, Tensor::new(av.shape().to_vec(), ga)?);
                acc(*b, Tensor::new(bv.shape().to_vec(), gb)?);
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = vec![0.0; gd.len()];
                let mut gb = vec![0.0; gd.len()];
                for i in 0..gd.len() {
                    if av.data()[i] <= bv.data()[i] {
                        ga[i] = gd[i];
                    } else {
                        gb[i] = gd[i];
                    }
                }
                acc(*a, Tensor::new(av.shape().to_vec(), ga)?);
                acc(*b, Tensor::new(bv.shape().to_vec(), gb)?);
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let rv = self.value(*row);
                let n = rv.cols();
                let mut gr = vec![0.0; n];
                for chunk in gd.chunks(n) {
                    for (o, &x) in gr.iter_mut().zip(chunk) {
                        *o += x;
                    }
                }
                acc(*row, Tensor::new(rv.shape().to_vec(), gr)?);
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Sigmoid(a) => {
                let d = gd.iter().zip(y.data()).map(|(g, s)| g * s * (1.0 - s)).collect();
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Tanh(a) => {
                let d = gd.iter().zip(y.data()).map(|(g, t)| g * (1.0 - t * t)).collect();
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = gd.iter().zip(x.data()).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Exp(a) => {
                let d = gd.iter().zip(y.data()).map(|(g, e)| g * e).collect();
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Ln(a) => {
                let x = self.value(*a);
                let d = gd.iter().zip(x.data()).map(|(g, x)| g / x).collect();
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let d = gd
                    .iter()
                    .zip(x.data())
                    .map(|(g, &x)| if x >= *lo && x <= *hi { *g } else { 0.0 })
                    .collect();
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::ConcatCols(parts) => {
                let rows = y.rows();
                let total = y.cols();
                let mut offset = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let w = pv.cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    acc(*p, Tensor::new(pv.shape().to_vec(), d)?);
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let (rows, cols, w) = (av.rows(), av.cols(), y.cols());
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + w].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                acc(*a, Tensor::new(av.shape().to_vec(), d)?);
            }
            Op::Transpose(a) => {
                let (m, n) = (y.rows(), y.cols());
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        d[j * m + i] = gd[i * n + j];
                    }
                }
                acc(*a, Tensor::new(self.value(*a).shape().to_vec(), d)?);
            }
            Op::Reshape(a) => acc(*a, g.reshaped(self.value(*a).shape())?),
            Op::SoftmaxRows(a) => {
                let n = y.cols();
                let mut d = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.data().chunks(n).zip(gd.chunks(n)).zip(d.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((o, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::LogSoftmaxRows(a) => {
                let n = y.cols();
                let mut d = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.data().chunks(n).zip(gd.chunks(n)).zip(d.chunks_mut(n)) {
                    let total: f64 = gr.iter().sum();
                    for ((o, &ly), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *o = gv - ly.exp() * total;
                    }
                }
                acc(*a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::filled(av.shape(), gd[0]));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::filled(av.shape(), gd[0] / av.len() as f64));
            }
            Op::CosineRows(qs, ks) => {
                let (qv, kv) = (self.value(*qs), self.value(*ks));
                let (m, n, dim) = (qv.rows(), kv.rows(), qv.cols());
                let mut gq = vec![0.0; m * dim];
                let mut gk = vec![0.0; n * dim];
                let knorms: Vec<f64> = (0..n).map(|j| norm(kv.row_slice(j))).collect();
                for i in 0..m {
                    let q = qv.row_slice(i);
                    let qn = norm(q);
                    if qn == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        let kn = knorms[j];
                        let gij = gd[i * n + j];
                        if kn == 0.0 || gij == 0.0 {
                            continue;
                        }
                        let k = kv.row_slice(j);
                        let c = y.data()[i * n + j];
                        for t in 0..dim {
                            gq[i * dim + t] += gij * (k[t] / (qn * kn) - c * q[t] / (qn * qn));
                            gk[j * dim + t] += gij * (q[t] / (qn * kn) - c * k[t] / (kn * kn));
                        }
                    }
                }
                acc(*qs, Tensor::new(qv.shape().to_vec(), gq)?);
                acc(*ks, Tensor::new(kv.shape().to_vec(), gk)?);
            }
            Op::Pick(a, idx) => {
                let av = self.value(*a);
                let cols = av.cols();
                let mut d = vec![0.0; av.len()];
                for (r, &c) in idx.iter().enumerate() {
                    d[r * cols + c] = gd[r];
                }
                acc(*a, Tensor::new(av.shape().to_vec(), d)?);
            }
            Op::EmbedSum(w, rows) => {
                let wv = self.value(*w);
                let h = wv.cols();
                let mut d = vec![0.0; wv.len()];
                for (b, active) in rows.iter().enumerate() {
                    let gr = &gd[b * h..(b + 1) * h];
                    for &j in active {
                        for (o, &gv) in d[j * h..(j + 1) * h].iter_mut().zip(gr) {
                            *o += gv;
                        }
                    }
                }
                acc(*w, Tensor::new(wv.shape().to_vec(), d)?);
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut d = vec![0.0; av.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &gv) in d[i * c..(i + 1) * c].iter_mut().zip(&gd[r * c..(r + 1) * c]) {
                        *o += gv;
                    }
                }
                acc(*a, Tensor::new(av.shape().to_vec(), d)?);
            }
        }
        Ok(())
    }
}
