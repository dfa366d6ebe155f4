//! Reverse-mode automatic differentiation over an explicit graph.
//!
//! A [`Graph`] records operations eagerly: every builder method computes its
//! output tensor immediately and appends a node. [`Graph::backward`] then
//! walks the nodes in reverse, applying each operation's vector-Jacobian
//! product and accumulating gradients additively, so a leaf used `k` times
//! receives the sum of `k` contributions.
//!
//! Shape violations are programming errors and panic with both shapes
//! reported. Non-finite values are an error state, not data: every node's
//! output is checked as it is produced.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::NumericsError;

/// Large negative stand-in for log(0) that keeps arithmetic finite. Masked
/// attention logits and impossible CTC states use this.
pub const NEG_BIG: f64 = -1.0e30;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Param,
    Const,
    Add,
    Sub,
    Mul,
    Matmul,
    AddRow,
    LogAddExp,
    Scale(f64),
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Ln,
    Abs,
    Transpose,
    SoftmaxRows,
    LogSoftmaxRows,
    LayerNorm { eps: f64 },
    SumAll,
    ConcatRows,
    ConcatCols,
    SliceRows { start: usize },
    SliceCols { start: usize },
    GatherRows(Vec<usize>),
    PickPerRow(Vec<usize>),
    PairRows,
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    needs_grad: bool,
}

/// Map from parameter name to its gradient.
pub type GradMap = BTreeMap<String, Tensor>;

/// An eagerly-evaluated computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
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

    /// Register a named parameter leaf. Names must be unique within a graph.
    pub fn param(&mut self, name: &str, value: Tensor) -> NodeId {
        assert!(
            !self.params.iter().any(|(n, _)| n == name),
            "duplicate parameter name {name:?}"
        );
        value.assert_finite("param");
        let id = self.push(Op::Param, vec![], value, true);
        self.params.push((name.to_string(), id));
        id
    }

    /// A constant leaf; never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        value.assert_finite("constant");
        self.push(Op::Const, vec![], value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, inputs, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        value.assert_finite(op_name(&op));
        let needs = inputs.iter().any(|&i| self.nodes[i.0].needs_grad);
        self.push(op, inputs, value, needs)
    }

    // ── elementwise and linear algebra ──────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push_op(Op::Add, vec![a, b], v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push_op(Op::Sub, vec![a, b], v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push_op(Op::Mul, vec![a, b], v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push_op(Op::Matmul, vec![a, b], v)
    }

    /// Add a `[1, d]` row vector to every row of a `[t, d]` matrix.
    pub fn add_row(&mut self, m: NodeId, r: NodeId) -> NodeId {
        let (mv, rv) = (self.value(m), self.value(r));
        assert_eq!(rv.rows(), 1, "add_row expects a [1, d] row, got {:?}", rv.shape());
        assert_eq!(
            mv.cols(),
            rv.cols(),
            "add_row width mismatch: {:?} vs {:?}",
            mv.shape(),
            rv.shape()
        );
        let cols = mv.cols();
        let mut out = mv.clone();
        for i in 0..mv.rows() {
            for j in 0..cols {
                out.data_mut()[i * cols + j] += rv.data()[j];
            }
        }
        self.push_op(Op::AddRow, vec![m, r], out)
    }

    /// `x @ w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|a| a * c);
        self.push_op(Op::Scale(c), vec![x], v)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.scale(x, -1.0)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push_op(Op::Relu, vec![x], v)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| 1.0 / (1.0 + (-a).exp()));
        self.push_op(Op::Sigmoid, vec![x], v)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push_op(Op::Tanh, vec![x], v)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::exp);
        self.push_op(Op::Exp, vec![x], v)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::ln);
        self.push_op(Op::Ln, vec![x], v)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::abs);
        self.push_op(Op::Abs, vec![x], v)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).transpose();
        self.push_op(Op::Transpose, vec![x], v)
    }

    /// Elementwise `log(exp(a) + exp(b))`, evaluated stably.
    pub fn logaddexp(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), stable_lse2);
        self.push_op(Op::LogAddExp, vec![a, b], v)
    }

    // ── normalizations ──────────────────────────────────────────────────

    /// Softmax along `axis` of a rank-2 tensor (1 = within each row).
    pub fn softmax(&mut self, x: NodeId, axis: usize) -> NodeId {
        let shape = self.value(x).shape().to_vec();
        assert!(axis < shape.len(), "softmax axis {axis} out of range for {shape:?}");
        assert!(shape[axis] > 0, "softmax on empty axis {axis} of {shape:?}");
        match axis {
            1 => self.softmax_rows(x),
            0 => {
                let t = self.transpose(x);
                let s = self.softmax_rows(t);
                self.transpose(s)
            }
            _ => unreachable!(),
        }
    }

    /// Softmax within each row, computed with max subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        assert!(xv.cols() > 0, "softmax on empty rows: {:?}", xv.shape());
        let mut out = xv.clone();
        for i in 0..xv.rows() {
            softmax_in_place(&mut out.data_mut()[i * xv.cols()..(i + 1) * xv.cols()]);
        }
        self.push_op(Op::SoftmaxRows, vec![x], out)
    }

    /// Log-softmax within each row; rows log-sum-exp to zero.
    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        assert!(xv.cols() > 0, "log_softmax on empty rows: {:?}", xv.shape());
        let cols = xv.cols();
        let mut out = xv.clone();
        for i in 0..xv.rows() {
            let row = &mut out.data_mut()[i * cols..(i + 1) * cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push_op(Op::LogSoftmaxRows, vec![x], out)
    }

    /// Per-row standardization followed by an affine transform: for each row
    /// `y = gamma * (x - mean) / sqrt(var + eps) + beta`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        assert!(eps > 0.0, "layer_norm eps must be positive, got {eps}");
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        assert!(
            gv.shape() == [1, d] && bv.shape() == [1, d],
            "layer_norm gamma/beta must be [1, {d}], got {:?} and {:?}",
            gv.shape(),
            bv.shape()
        );
        let mut out = xv.clone();
        for i in 0..xv.rows() {
            let (g, b) = (gv.data(), bv.data());
            let row = &mut out.data_mut()[i * d..(i + 1) * d];
            let (mu, var) = mean_var(row);
            let s = (var + eps).sqrt();
            for j in 0..d {
                row[j] = g[j] * (row[j] - mu) / s + b[j];
            }
        }
        self.push_op(Op::LayerNorm { eps }, vec![x, gamma, beta], out)
    }

    // ── reductions ──────────────────────────────────────────────────────

    /// Sum of all elements, shape `[1]`.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        self.push_op(Op::SumAll, vec![x], v)
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).numel();
        assert!(n > 0, "mean of empty tensor");
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    // ── structural ops ──────────────────────────────────────────────────

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows width mismatch: {:?}", v.shape());
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new([rows, cols], data);
        self.push_op(Op::ConcatRows, parts.to_vec(), out)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols height mismatch: {:?}", v.shape());
            let c = v.cols();
            for i in 0..rows {
                data[i * total + off..i * total + off + c]
                    .copy_from_slice(&v.data()[i * c..(i + 1) * c]);
            }
            off += c;
        }
        let out = Tensor::new([rows, total], data);
        self.push_op(Op::ConcatCols, parts.to_vec(), out)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        assert!(
            start + len <= xv.rows(),
            "slice_rows {start}..{} out of range for {:?}",
            start + len,
            xv.shape()
        );
        let c = xv.cols();
        let data = xv.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new([len, c], data);
        self.push_op(Op::SliceRows { start }, vec![x], out)
    }

    /// One row as a `[1, d]` tensor.
    pub fn row(&mut self, x: NodeId, i: usize) -> NodeId {
        self.slice_rows(x, i, 1)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        assert!(
            start + len <= xv.cols(),
            "slice_cols {start}..{} out of range for {:?}",
            start + len,
            xv.shape()
        );
        let (r, c) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&xv.data()[i * c + start..i * c + start + len]);
        }
        let out = Tensor::new([r, len], data);
        self.push_op(Op::SliceCols { start }, vec![x], out)
    }

    /// Select rows by index (rows may repeat); used for embedding lookup.
    pub fn gather_rows(&mut self, x: NodeId, indices: &[usize]) -> NodeId {
        let xv = self.value(x);
        let c = xv.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            assert!(i < xv.rows(), "gather_rows index {i} out of range for {:?}", xv.shape());
            data.extend_from_slice(xv.row_slice(i));
        }
        let out = Tensor::new([indices.len(), c], data);
        self.push_op(Op::GatherRows(indices.to_vec()), vec![x], out)
    }

    /// `out[i, 0] = x[i, indices[i]]`; used to pick target log-probs.
    pub fn pick_per_row(&mut self, x: NodeId, indices: &[usize]) -> NodeId {
        let xv = self.value(x);
        assert_eq!(indices.len(), xv.rows(), "pick_per_row needs one index per row");
        let mut data = Vec::with_capacity(indices.len());
        for (i, &j) in indices.iter().enumerate() {
            assert!(j < xv.cols(), "pick_per_row column {j} out of range for {:?}", xv.shape());
            data.push(xv.at(i, j));
        }
        let out = Tensor::new([indices.len(), 1], data);
        self.push_op(Op::PickPerRow(indices.to_vec()), vec![x], out)
    }

    /// Concatenate adjacent row pairs: `[t, d] -> [floor(t/2), 2d]`, dropping
    /// a trailing odd row.
    pub fn pair_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let (t, d) = (xv.rows(), xv.cols());
        let half = t / 2;
        let mut data = Vec::with_capacity(half * 2 * d);
        for i in 0..half {
            data.extend_from_slice(&xv.data()[2 * i * d..(2 * i + 2) * d]);
        }
        let out = Tensor::new([half, 2 * d], data);
        self.push_op(Op::PairRows, vec![x], out)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse-mode gradients of a scalar loss with respect to every
    /// registered parameter leaf. Parameters unreachable from the loss get
    /// zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<GradMap, NumericsError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(NumericsError::NonScalarLoss { shape: loss_value.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_value.shape().to_vec(), 1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(gout) = grads[id].take() else { continue };
            self.accumulate(id, &gout, &mut grads);
            if matches!(self.nodes[id].op, Op::Param) {
                grads[id] = Some(gout); // keep leaf gradients for collection
            }
        }

        let mut map = GradMap::new();
        for (name, nid) in &self.params {
            let g = grads[nid.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[nid.0].value.shape().to_vec()));
            g.assert_finite("backward");
            map.insert(name.clone(), g);
        }
        Ok(map)
    }

    fn add_grad(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn accumulate(&self, id: usize, gout: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let node = &self.nodes[id];
        let ins = &node.inputs;
        match &node.op {
            Op::Param | Op::Const => {}
            Op::Add => {
                self.add_grad(grads, ins[0], gout.clone());
                self.add_grad(grads, ins[1], gout.clone());
            }
            Op::Sub => {
                self.add_grad(grads, ins[0], gout.clone());
                self.add_grad(grads, ins[1], gout.map(|v| -v));
            }
            Op::Mul => {
                let (a, b) = (self.value(ins[0]), self.value(ins[1]));
                self.add_grad(grads, ins[0], gout.zip(b, |g, bv| g * bv));
                self.add_grad(grads, ins[1], gout.zip(a, |g, av| g * av));
            }
            Op::Matmul => {
                let (a, b) = (self.value(ins[0]), self.value(ins[1]));
                if self.nodes[ins[0].0].needs_grad {
                    self.add_grad(grads, ins[0], gout.matmul(&b.transpose()));
                }
                if self.nodes[ins[1].0].needs_grad {
                    self.add_grad(grads, ins[1], a.transpose().matmul(gout));
                }
            }
            Op::AddRow => {
                self.add_grad(grads, ins[0], gout.clone());
                if self.nodes[ins[1].0].needs_grad {
                    let (r, c) = (gout.rows(), gout.cols());
                    let mut col_sum = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            col_sum[j] += gout.at(i, j);
                        }
                    }
                    self.add_grad(grads, ins[1], Tensor::new([1, c], col_sum));
                }
            }
            Op::LogAddExp => {
                let (a, b) = (self.value(ins[0]), self.value(ins[1]));
                let out = &node.value;
                self.add_grad(
                    grads,
                    ins[0],
                    tri_zip(gout, a, out, |g, av, ov| g * (av - ov).exp()),
                );
                self.add_grad(
                    grads,
                    ins[1],
                    tri_zip(gout, b, out, |g, bv, ov| g * (bv - ov).exp()),
                );
            }
            Op::Scale(c) => {
                let c = *c;
                self.add_grad(grads, ins[0], gout.map(|g| g * c));
            }
            Op::Relu => {
                let x = self.value(ins[0]);
                self.add_grad(grads, ins[0], gout.zip(x, |g, xv| if xv > 0.0 { g } else { 0.0 }));
            }
            Op::Sigmoid => {
                let y = &node.value;
                self.add_grad(grads, ins[0], gout.zip(y, |g, yv| g * yv * (1.0 - yv)));
            }
            Op::Tanh => {
                let y = &node.value;
                self.add_grad(grads, ins[0], gout.zip(y, |g, yv| g * (1.0 - yv * yv)));
            }
            Op::Exp => {
                let y = &node.value;
                self.add_grad(grads, ins[0], gout.zip(y, |g, yv| g * yv));
            }
            Op::Ln => {
                let x = self.value(ins[0]);
                self.add_grad(grads, ins[0], gout.zip(x, |g, xv| g / xv));
            }
            Op::Abs => {
                let x = self.value(ins[0]);
                self.add_grad(grads, ins[0], gout.zip(x, |g, xv| g * sign(xv)));
            }
            Op::Transpose => {
                self.add_grad(grads, ins[0], gout.transpose());
            }
            Op::SoftmaxRows => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                let mut gx = Tensor::zeros([r, c]);
                for i in 0..r {
                    let dot: f64 =
                        (0..c).map(|j| gout.at(i, j) * y.at(i, j)).sum();
                    for j in 0..c {
                        gx.set(i, j, y.at(i, j) * (gout.at(i, j) - dot));
                    }
                }
                self.add_grad(grads, ins[0], gx);
            }
            Op::LogSoftmaxRows => {
                let y = &node.value; // log-probs
                let (r, c) = (y.rows(), y.cols());
                let mut gx = Tensor::zeros([r, c]);
                for i in 0..r {
                    let gsum: f64 = (0..c).map(|j| gout.at(i, j)).sum();
                    for j in 0..c {
                        gx.set(i, j, gout.at(i, j) - y.at(i, j).exp() * gsum);
                    }
                }
                self.add_grad(grads, ins[0], gx);
            }
            Op::LayerNorm { eps } => {
                let x = self.value(ins[0]);
                let gamma = self.value(ins[1]);
                let (r, d) = (x.rows(), x.cols());
                let mut gx = Tensor::zeros([r, d]);
                let mut ggamma = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                for i in 0..r {
                    let row = x.row_slice(i);
                    let (mu, var) = mean_var(row);
                    let s = (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mu) / s).collect();
                    // g = dL/dxhat, then the standard two-mean correction.
                    let g: Vec<f64> =
                        (0..d).map(|j| gout.at(i, j) * gamma.data()[j]).collect();
                    let mean_g = g.iter().sum::<f64>() / d as f64;
                    let mean_gx = g.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        gx.set(i, j, (g[j] - mean_g - xhat[j] * mean_gx) / s);
                        ggamma[j] += gout.at(i, j) * xhat[j];
                        gbeta[j] += gout.at(i, j);
                    }
                }
                self.add_grad(grads, ins[0], gx);
                self.add_grad(grads, ins[1], Tensor::new([1, d], ggamma));
                self.add_grad(grads, ins[2], Tensor::new([1, d], gbeta));
            }
            Op::SumAll => {
                let xshape = self.value(ins[0]).shape().to_vec();
                let g = gout.item();
                self.add_grad(grads, ins[0], Tensor::full(xshape, g));
            }
            Op::ConcatRows => {
                let c = node.value.cols();
                let mut start = 0;
                for &p in ins {
                    let r = self.value(p).rows();
                    let data = gout.data()[start * c..(start + r) * c].to_vec();
                    self.add_grad(grads, p, Tensor::new([r, c], data));
                    start += r;
                }
            }
            Op::ConcatCols => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in ins {
                    let c = self.value(p).cols();
                    let mut data = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        data.extend_from_slice(&gout.data()[i * total + off..i * total + off + c]);
                    }
                    self.add_grad(grads, p, Tensor::new([rows, c], data));
                    off += c;
                }
            }
            Op::SliceRows { start } => {
                let xv = self.value(ins[0]);
                let mut gx = Tensor::zeros([xv.rows(), xv.cols()]);
                let c = xv.cols();
                let len = node.value.rows();
                gx.data_mut()[start * c..(start + len) * c].copy_from_slice(gout.data());
                self.add_grad(grads, ins[0], gx);
            }
            Op::SliceCols { start } => {
                let xv = self.value(ins[0]);
                let (r, c) = (xv.rows(), xv.cols());
                let len = node.value.cols();
                let mut gx = Tensor::zeros([r, c]);
                for i in 0..r {
                    for j in 0..len {
                        gx.set(i, start + j, gout.at(i, j));
                    }
                }
                self.add_grad(grads, ins[0], gx);
            }
            Op::GatherRows(indices) => {
                let xv = self.value(ins[0]);
                let c = xv.cols();
                let mut gx = Tensor::zeros([xv.rows(), xv.cols()]);
                for (i, &src) in indices.iter().enumerate() {
                    for j in 0..c {
                        let cur = gx.at(src, j);
                        gx.set(src, j, cur + gout.at(i, j));
                    }
                }
                self.add_grad(grads, ins[0], gx);
            }
            Op::PickPerRow(indices) => {
                let xv = self.value(ins[0]);
                let mut gx = Tensor::zeros([xv.rows(), xv.cols()]);
                for (i, &j) in indices.iter().enumerate() {
                    gx.set(i, j, gout.at(i, 0));
                }
                self.add_grad(grads, ins[0], gx);
            }
            Op::PairRows => {
                let xv = self.value(ins[0]);
                let (t, d) = (xv.rows(), xv.cols());
                let mut gx = Tensor::zeros([t, d]);
                for i in 0..t / 2 {
                    for j in 0..d {
                        gx.set(2 * i, j, gout.at(i, j));
                        gx.set(2 * i + 1, j, gout.at(i, d + j));
                    }
                }
                self.add_grad(grads, ins[0], gx);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Param => "param",
        Op::Const => "const",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Matmul => "matmul",
        Op::AddRow => "add_row",
        Op::LogAddExp => "logaddexp",
        Op::Scale(_) => "scale",
        Op::Relu => "relu",
        Op::Sigmoid => "sigmoid",
        Op::Tanh => "tanh",
        Op::Exp => "exp",
        Op::Ln => "ln",
        Op::Abs => "abs",
        Op::Transpose => "transpose",
        Op::SoftmaxRows => "softmax",
        Op::LogSoftmaxRows => "log_softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::SumAll => "sum",
        Op::ConcatRows => "concat_rows",
        Op::ConcatCols => "concat_cols",
        Op::SliceRows { .. } => "slice_rows",
        Op::SliceCols { .. } => "slice_cols",
        Op::GatherRows(_) => "gather_rows",
        Op::PickPerRow(_) => "pick_per_row",
        Op::PairRows => "pair_rows",
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean_var(row: &[f64]) -> (f64, f64) {
    let d = row.len() as f64;
    let mu = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / d;
    (mu, var)
}

fn stable_lse2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn tri_zip(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape());
    assert_eq!(a.shape(), c.shape());
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .zip(c.data().iter())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_params_has_unit_gradients() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::row(vec![3.0, -1.0, 2.0]));
        let loss = g.sum_all(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["p"], Tensor::row(vec![1.0, 1.0, 1.0]));
    }

    #[test]
    fn sum_of_squares_gradient_is_two_p() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::row(vec![3.0, -1.0, 2.0]));
        let sq = g.mul(p, p);
        let loss = g.sum_all(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["p"], Tensor::row(vec![6.0, -2.0, 4.0]));
    }

    #[test]
    fn reused_leaf_accumulates_contributions() {
        // loss = sum(p) + sum(p) -> gradient 2 everywhere
        let mut g = Graph::new();
        let p = g.param("p", Tensor::row(vec![1.0, 2.0]));
        let s1 = g.sum_all(p);
        let s2 = g.sum_all(p);
        let loss = g.add(s1, s2);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["p"], Tensor::row(vec![2.0, 2.0]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::row(vec![1.0, 2.0]));
        let err = g.backward(p).unwrap_err();
        assert!(matches!(err, NumericsError::NonScalarLoss { .. }));
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let p = g.param("used", Tensor::row(vec![1.0]));
        let _q = g.param("unused", Tensor::row(vec![5.0, 5.0]));
        let loss = g.sum_all(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads["unused"], Tensor::zeros([1, 2]));
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 2.0, 3.0]));
        let y = g.softmax(x, 1);
        // independent exp/sum evaluation
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        for (a, b) in g.value(y).data().iter().zip(e.iter()) {
            assert!((a - b / s).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.0, 0.0]));
        let y = g.softmax(x, 1);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let a = g.constant(Tensor::row(vec![0.3, -1.2, 4.0]));
        let b = g.constant(Tensor::row(vec![0.3 + 7.5, -1.2 + 7.5, 4.0 + 7.5]));
        let sa = g.softmax(a, 1);
        let sb = g.softmax(b, 1);
        for (x, y) in g.value(sa).data().iter().zip(g.value(sb).data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "empty axis")]
    fn softmax_rejects_empty_axis() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros([2, 0]));
        let _ = g.softmax(x, 1);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::numerics::Rng::new(4);
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(
            [5, 7],
            (0..35).map(|_| rng.uniform(-10.0, 10.0)).collect(),
        ));
        let y = g.softmax_rows(x);
        for i in 0..5 {
            let s: f64 = g.value(y).row_slice(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn layer_norm_constant_row_is_beta() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![4.0, 4.0, 4.0]));
        let gamma = g.constant(Tensor::row(vec![1.0, 1.0, 1.0]));
        let beta = g.constant(Tensor::row(vec![0.0, 0.0, 0.0]));
        let y = g.layer_norm(x, gamma, beta, 1e-6);
        for &v in g.value(y).data() {
            assert_eq!(v, 0.0); // zero variance floors to eps, numerator is 0
        }
    }

    #[test]
    fn layer_norm_two_points() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 3.0]));
        let gamma = g.constant(Tensor::row(vec![1.0, 1.0]));
        let beta = g.constant(Tensor::row(vec![0.0, 0.0]));
        let y = g.layer_norm(x, gamma, beta, 1e-12);
        let v = g.value(y).data();
        assert!((v[0] - -1.0).abs() <= 1e-9);
        assert!((v[1] - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn layer_norm_mean_is_tiny_with_zero_beta() {
        let mut rng = crate::numerics::Rng::new(2);
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(
            [4, 9],
            (0..36).map(|_| rng.uniform(-3.0, 3.0)).collect(),
        ));
        let gamma = g.constant(Tensor::full([1, 9], 1.0));
        let beta = g.constant(Tensor::zeros([1, 9]));
        let y = g.layer_norm(x, gamma, beta, 1e-9);
        for i in 0..4 {
            let mean: f64 = g.value(y).row_slice(i).iter().sum::<f64>() / 9.0;
            assert!(mean.abs() <= 1e-10, "row {i} mean {mean}");
        }
    }

    #[test]
    fn pair_rows_drops_odd_remainder() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
        ]));
        let y = g.pair_rows(x);
        assert_eq!(g.value(y).shape(), &[1, 4]);
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn logaddexp_handles_masked_operands() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::row(vec![NEG_BIG, 0.5]));
        let b = g.constant(Tensor::row(vec![0.0, NEG_BIG]));
        let y = g.logaddexp(a, b);
        let v = g.value(y).data();
        assert!((v[0] - 0.0).abs() <= 1e-12);
        assert!((v[1] - 0.5).abs() <= 1e-12);
    }

    #[test]
    #[should_panic(expected = "non-finite value produced by ln")]
    fn non_finite_is_an_error_not_a_value() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![-1.0]));
        let _ = g.ln(x);
    }
}
