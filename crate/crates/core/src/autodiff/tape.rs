//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! The tape is rebuilt on every forward pass (define-by-run). Ops are
//! methods on [`Tape`]; an op records a node only if at least one input
//! is tracked, so the same methods double as eager math for detached
//! tensors. Nodes are appended in creation order, which guarantees a
//! topological order: every node's inputs precede it.
//!
//! `backward` takes `&self` and allocates fresh gradient buffers, so two
//! backward passes over the same tape produce identical gradients.

use std::sync::Arc;

use super::rng::RngStream;
use super::tensor::{NodeId, Tensor};

/// Input slot of a node: either an earlier node or an untracked constant
/// whose value is saved for the backward pass.
#[derive(Clone, Debug)]
enum Src {
    Node(NodeId),
    Const(Tensor),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    /// Broadcast-add a length-n vector to every row of an m×n matrix.
    AddRow,
    Scale(f32),
    AddScalar,
    Neg,
    Relu,
    Tanh,
    Exp,
    Ln,
    SumAll,
    MeanAll,
    Softmax(usize),
    LogSoftmax(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    GatherRows(Vec<usize>),
    SelectPerRow(Vec<usize>),
    Reshape,
    /// Straight-through estimator: forward is a constant offset added to
    /// the soft input, backward passes gradients through unchanged.
    StraightThrough,
}

struct Node {
    op: Op,
    inputs: Vec<Src>,
    value: Tensor,
    /// Reductions also keep their f64-accumulated value so callers can
    /// read scalars at full precision (finite-difference probes need it).
    f64_value: Option<f64>,
}

/// Gradients of one backward pass, indexed by tape node.
pub struct Gradients {
    by_node: Vec<Vec<f32>>,
}

impl Gradients {
    /// Gradient w.r.t. a tracked tensor. Untracked tensors have no
    /// gradient; tracked-but-unused leaves return zeros.
    pub fn wrt(&self, t: &Tensor) -> Option<&[f32]> {
        t.node().map(|id| self.by_node[id].as_slice())
    }

    pub fn wrt_or_panic(&self, t: &Tensor) -> &[f32] {
        self.wrt(t).expect("gradient requested for untracked tensor")
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Register a tensor as a differentiable leaf. The returned tensor
    /// shares storage with the input but is tracked.
    pub fn leaf(&mut self, t: &Tensor) -> Tensor {
        let id = self.nodes.len();
        let tracked = Tensor::from_shared(t.shape().to_vec(), t.share_data(), Some(id));
        self.nodes.push(Node { op: Op::Leaf, inputs: vec![], value: tracked.clone(), f64_value: None });
        tracked
    }

    fn src(t: &Tensor) -> Src {
        match t.node() {
            Some(id) => Src::Node(id),
            None => Src::Const(t.clone()),
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<&Tensor>, shape: Vec<usize>, data: Vec<f32>, f64_value: Option<f64>) -> Tensor {
        let tracked = inputs.iter().any(|t| t.is_tracked());
        if !tracked {
            let mut out = Tensor::new(shape, data);
            out.node = None;
            return out;
        }
        let id = self.nodes.len();
        let out = Tensor::from_shared(shape, Arc::new(data), Some(id));
        self.nodes.push(Node {
            op,
            inputs: inputs.iter().map(|t| Self::src(t)).collect(),
            value: out.clone(),
            f64_value,
        });
        out
    }

    fn value_of<'a>(&'a self, src: &'a Src) -> &'a Tensor {
        match src {
            Src::Node(id) => &self.nodes[*id].value,
            Src::Const(t) => t,
        }
    }

    // ---- ops ------------------------------------------------------------

    /// Standard matrix product; accepts [m,k]·[k,n] (1-D treated as a row).
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        let (m, ka) = (a.rows(), a.cols());
        let (kb, n) = (b.rows(), b.cols());
        assert_eq!(ka, kb, "matmul inner dimensions disagree: {ka} vs {kb}");
        let data = matmul_raw(a.data(), b.data(), m, ka, n);
        self.push(Op::MatMul, vec![a, b], vec![m, n], data, None)
    }

    pub fn transpose(&mut self, a: &Tensor) -> Tensor {
        let (m, n) = (a.rows(), a.cols());
        let src = a.data();
        let mut data = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        self.push(Op::Transpose, vec![a], vec![n, m], data, None)
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "add shape mismatch");
        let data = zip_map(a.data(), b.data(), |x, y| x + y);
        self.push(Op::Add, vec![a, b], a.shape().to_vec(), data, None)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "sub shape mismatch");
        let data = zip_map(a.data(), b.data(), |x, y| x - y);
        self.push(Op::Sub, vec![a, b], a.shape().to_vec(), data, None)
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "mul shape mismatch");
        let data = zip_map(a.data(), b.data(), |x, y| x * y);
        self.push(Op::Mul, vec![a, b], a.shape().to_vec(), data, None)
    }

    pub fn div(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape(), b.shape(), "div shape mismatch");
        let data = zip_map(a.data(), b.data(), |x, y| x / y);
        self.push(Op::Div, vec![a, b], a.shape().to_vec(), data, None)
    }

    /// `a` is [m,n], `bias` is [n]; adds bias to every row.
    pub fn add_row(&mut self, a: &Tensor, bias: &Tensor) -> Tensor {
        let (m, n) = (a.rows(), a.cols());
        assert_eq!(bias.len(), n, "bias length {} != row width {n}", bias.len());
        let mut data = a.data().to_vec();
        let bv = bias.data();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += bv[j];
            }
        }
        self.push(Op::AddRow, vec![a, bias], a.shape().to_vec(), data, None)
    }

    pub fn scale(&mut self, a: &Tensor, c: f32) -> Tensor {
        let data = a.data().iter().map(|x| x * c).collect();
        self.push(Op::Scale(c), vec![a], a.shape().to_vec(), data, None)
    }

    pub fn add_scalar(&mut self, a: &Tensor, c: f32) -> Tensor {
        let data = a.data().iter().map(|x| x + c).collect();
        self.push(Op::AddScalar, vec![a], a.shape().to_vec(), data, None)
    }

    pub fn neg(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| -x).collect();
        self.push(Op::Neg, vec![a], a.shape().to_vec(), data, None)
    }

    pub fn relu(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| x.max(0.0)).collect();
        self.push(Op::Relu, vec![a], a.shape().to_vec(), data, None)
    }

    pub fn tanh(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh, vec![a], a.shape().to_vec(), data, None)
    }

    pub fn exp(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| x.exp()).collect();
        self.push(Op::Exp, vec![a], a.shape().to_vec(), data, None)
    }

    pub fn ln(&mut self, a: &Tensor) -> Tensor {
        let data = a.data().iter().map(|x| x.ln()).collect();
        self.push(Op::Ln, vec![a], a.shape().to_vec(), data, None)
    }

    /// Sum of all entries, accumulated in f64, returned as a scalar.
    pub fn sum(&mut self, a: &Tensor) -> Tensor {
        let acc: f64 = a.data().iter().map(|&x| x as f64).sum();
        self.push(Op::SumAll, vec![a], vec![1], vec![acc as f32], Some(acc))
    }

    /// Mean of all entries, accumulated in f64.
    pub fn mean(&mut self, a: &Tensor) -> Tensor {
        assert!(!a.is_empty(), "mean of empty tensor");
        let acc: f64 = a.data().iter().map(|&x| x as f64).sum::<f64>() / a.len() as f64;
        self.push(Op::MeanAll, vec![a], vec![1], vec![acc as f32], Some(acc))
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&mut self, a: &Tensor, axis: usize) -> Tensor {
        let data = softmax_raw(a, axis, false);
        self.push(Op::Softmax(axis), vec![a], a.shape().to_vec(), data, None)
    }

    pub fn log_softmax(&mut self, a: &Tensor, axis: usize) -> Tensor {
        let data = softmax_raw(a, axis, true);
        self.push(Op::LogSoftmax(axis), vec![a], a.shape().to_vec(), data, None)
    }

    /// Stack 2-D (or row-vector) tensors vertically.
    pub fn concat_rows(&mut self, parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let n = parts[0].cols();
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.cols(), n, "concat_rows column mismatch");
            rows.push(p.rows());
            data.extend_from_slice(p.data());
        }
        let m = rows.iter().sum();
        self.push(Op::ConcatRows(rows), parts.to_vec(), vec![m, n], data, None)
    }

    /// Stack 2-D tensors horizontally (equal row counts).
    pub fn concat_cols(&mut self, parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = parts[0].rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                assert_eq!(p.rows(), m, "concat_cols row mismatch");
                p.cols()
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut data = vec![0.0f32; m * n];
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let src = p.data();
            for i in 0..m {
                data[i * n + off..i * n + off + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        self.push(Op::ConcatCols(widths), parts.to_vec(), vec![m, n], data, None)
    }

    /// Select rows of a 2-D tensor by index (rows may repeat).
    pub fn gather_rows(&mut self, a: &Tensor, idx: &[usize]) -> Tensor {
        let (m, n) = (a.rows(), a.cols());
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            assert!(i < m, "gather_rows index {i} out of range {m}");
            data.extend_from_slice(&a.data()[i * n..(i + 1) * n]);
        }
        self.push(Op::GatherRows(idx.to_vec()), vec![a], vec![idx.len(), n], data, None)
    }

    /// Pick one entry per row: out[r] = a[r, idx[r]]. Output is [m,1].
    pub fn select_per_row(&mut self, a: &Tensor, idx: &[usize]) -> Tensor {
        let (m, n) = (a.rows(), a.cols());
        assert_eq!(idx.len(), m, "select_per_row needs one index per row");
        let mut data = Vec::with_capacity(m);
        for (r, &j) in idx.iter().enumerate() {
            assert!(j < n, "select_per_row column {j} out of range {n}");
            data.push(a.data()[r * n + j]);
        }
        self.push(Op::SelectPerRow(idx.to_vec()), vec![a], vec![m, 1], data, None)
    }

    pub fn reshape(&mut self, a: &Tensor, shape: Vec<usize>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), a.len(), "reshape changes element count");
        self.push(Op::Reshape, vec![a], shape, a.data().to_vec(), None)
    }

    /// Gumbel-softmax sample over the last axis of a 1-D logits tensor.
    ///
    /// Soft samples sum to 1; with `hard` the forward value is the one-hot
    /// argmax while gradients flow through the soft sample unchanged
    /// (straight-through).
    pub fn gumbel_softmax(&mut self, logits: &Tensor, temperature: f32, hard: bool, rng: &mut RngStream) -> Tensor {
        assert!(temperature > 0.0, "gumbel_softmax temperature must be > 0, got {temperature}");
        assert_eq!(logits.shape().len(), 1, "gumbel_softmax expects 1-D logits");
        let k = logits.len();
        assert!(k > 0, "gumbel_softmax over empty logits");
        let noise: Vec<f32> = (0..k).map(|_| rng.gumbel_f32()).collect();
        let noise_t = Tensor::from_slice(&noise);
        let shifted = self.add(logits, &noise_t);
        let scaled = self.scale(&shifted, 1.0 / temperature);
        let soft = self.softmax(&scaled, 0);
        if !hard {
            return soft;
        }
        let argmax = argmax_slice(soft.data());
        let mut offset = soft.data().iter().map(|v| -v).collect::<Vec<f32>>();
        offset[argmax] += 1.0;
        // forward: soft + (onehot - soft) = onehot; backward: identity to soft
        let data: Vec<f32> = (0..k).map(|i| if i == argmax { 1.0 } else { 0.0 }).collect();
        self.push(Op::StraightThrough, vec![&soft], vec![k], data, None)
    }

    /// Full-precision value of a reduction scalar (falls back to the f32
    /// payload for other tensors).
    pub fn scalar_f64(&self, t: &Tensor) -> f64 {
        if let Some(id) = t.node() {
            if let Some(v) = self.nodes[id].f64_value {
                return v;
            }
        }
        t.value_scalar() as f64
    }

    // ---- backward -------------------------------------------------------

    /// Gradient of a scalar loss w.r.t. every tracked tensor. Leaves that
    /// do not contribute to the loss get zero gradients.
    pub fn backward(&self, loss: &Tensor) -> Gradients {
        assert_eq!(loss.len(), 1, "backward requires a scalar loss");
        let loss_id = loss.node().expect("backward requires a tracked loss");
        let mut grads: Vec<Vec<f32>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss_id][0] = 1.0;

        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            if g.iter().all(|&v| v == 0.0) {
                grads[id] = g;
                continue;
            }
            let input_grads = self.op_backward(node, &g);
            grads[id] = g;
            for (src, ig) in node.inputs.iter().zip(input_grads) {
                if let (Src::Node(iid), Some(ig)) = (src, ig) {
                    let dst = &mut grads[*iid];
                    for (d, v) in dst.iter_mut().zip(&ig) {
                        *d += v;
                    }
                }
            }
        }
        Gradients { by_node: grads }
    }

    /// Per-op vector-Jacobian products. Returns one optional gradient per
    /// input slot (None for slots that need no gradient).
    fn op_backward(&self, node: &Node, g: &[f32]) -> Vec<Option<Vec<f32>>> {
        let val = |i: usize| self.value_of(&node.inputs[i]);
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul => {
                let a = val(0);
                let b = val(1);
                let (m, k) = (a.rows(), a.cols());
                let n = b.cols();
                // da = g·bᵀ, db = aᵀ·g
                let mut da = vec![0.0f32; m * k];
                for i in 0..m {
                    for j in 0..k {
                        let mut acc = 0.0f64;
                        for l in 0..n {
                            acc += g[i * n + l] as f64 * b.data()[j * n + l] as f64;
                        }
                        da[i * k + j] = acc as f32;
                    }
                }
                let mut db = vec![0.0f32; k * n];
                for i in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0f64;
                        for l in 0..m {
                            acc += a.data()[l * k + i] as f64 * g[l * n + j] as f64;
                        }
                        db[i * n + j] = acc as f32;
                    }
                }
                vec![Some(da), Some(db)]
            }
            Op::Transpose => {
                let (n, m) = (node.value.rows(), node.value.cols());
                let mut da = vec![0.0f32; m * n];
                for i in 0..n {
                    for j in 0..m {
                        da[j * n + i] = g[i * m + j];
                    }
                }
                vec![Some(da)]
            }
            Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
            Op::Mul => {
                let a = val(0);
                let b = val(1);
                vec![
                    Some(zip_map(g, b.data(), |x, y| x * y)),
                    Some(zip_map(g, a.data(), |x, y| x * y)),
                ]
            }
            Op::Div => {
                let a = val(0);
                let b = val(1);
                let da = zip_map(g, b.data(), |x, y| x / y);
                let db: Vec<f32> = g
                    .iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(gv, (av, bv))| -gv * av / (bv * bv))
                    .collect();
                vec![Some(da), Some(db)]
            }
            Op::AddRow => {
                let n = node.value.cols();
                let m = node.value.rows();
                let mut dbias = vec![0.0f32; n];
                for j in 0..n {
                    let mut acc = 0.0f64;
                    for i in 0..m {
                        acc += g[i * n + j] as f64;
                    }
                    dbias[j] = acc as f32;
                }
                vec![Some(g.to_vec()), Some(dbias)]
            }
            Op::Scale(c) => vec![Some(g.iter().map(|v| v * c).collect())],
            Op::AddScalar => vec![Some(g.to_vec())],
            Op::Neg => vec![Some(g.iter().map(|v| -v).collect())],
            Op::Relu => {
                let x = val(0);
                vec![Some(zip_map(g, x.data(), |gv, xv| if xv > 0.0 { gv } else { 0.0 }))]
            }
            Op::Tanh => {
                let y = node.value.data();
                vec![Some(zip_map(g, y, |gv, yv| gv * (1.0 - yv * yv)))]
            }
            Op::Exp => {
                let y = node.value.data();
                vec![Some(zip_map(g, y, |gv, yv| gv * yv))]
            }
            Op::Ln => {
                let x = val(0);
                vec![Some(zip_map(g, x.data(), |gv, xv| gv / xv))]
            }
            Op::SumAll => {
                let n = val(0).len();
                vec![Some(vec![g[0]; n])]
            }
            Op::MeanAll => {
                let n = val(0).len();
                vec![Some(vec![g[0] / n as f32; n])]
            }
            Op::Softmax(axis) => {
                let y = node.value.data();
                let mut dx = vec![0.0f32; y.len()];
                for_each_lane(node.value.shape(), *axis, |lane| {
                    let mut dot = 0.0f64;
                    for &o in lane {
                        dot += g[o] as f64 * y[o] as f64;
                    }
                    for &o in lane {
                        dx[o] = ((g[o] as f64 - dot) * y[o] as f64) as f32;
                    }
                });
                vec![Some(dx)]
            }
            Op::LogSoftmax(axis) => {
                let y = node.value.data();
                let mut dx = vec![0.0f32; y.len()];
                for_each_lane(node.value.shape(), *axis, |lane| {
                    let mut gsum = 0.0f64;
                    for &o in lane {
                        gsum += g[o] as f64;
                    }
                    for &o in lane {
                        dx[o] = (g[o] as f64 - gsum * (y[o] as f64).exp()) as f32;
                    }
                });
                vec![Some(dx)]
            }
            Op::ConcatRows(rows) => {
                let n = node.value.cols();
                let mut out = Vec::with_capacity(rows.len());
                let mut off = 0;
                for &r in rows {
                    out.push(Some(g[off * n..(off + r) * n].to_vec()));
                    off += r;
                }
                out
            }
            Op::ConcatCols(widths) => {
                let m = node.value.rows();
                let n = node.value.cols();
                let mut out = Vec::with_capacity(widths.len());
                let mut off = 0;
                for &w in widths {
                    let mut dg = vec![0.0f32; m * w];
                    for i in 0..m {
                        dg[i * w..(i + 1) * w].copy_from_slice(&g[i * n + off..i * n + off + w]);
                    }
                    out.push(Some(dg));
                    off += w;
                }
                out
            }
            Op::GatherRows(idx) => {
                let a = val(0);
                let n = a.cols();
                let mut da = vec![0.0f32; a.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..n {
                        da[i * n + j] += g[r * n + j];
                    }
                }
                vec![Some(da)]
            }
            Op::SelectPerRow(idx) => {
                let a = val(0);
                let n = a.cols();
                let mut da = vec![0.0f32; a.len()];
                for (r, &j) in idx.iter().enumerate() {
                    da[r * n + j] += g[r];
                }
                vec![Some(da)]
            }
            Op::Reshape => vec![Some(g.to_vec())],
            Op::StraightThrough => vec![Some(g.to_vec())],
        }
    }
}

// ---- raw kernels ---------------------------------------------------------

fn zip_map(a: &[f32], b: &[f32], f: impl Fn(f32, f32) -> f32) -> Vec<f32> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn matmul_raw(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for l in 0..k {
                acc += a[i * k + l] as f64 * b[l * n + j] as f64;
            }
            out[i * n + j] = acc as f32;
        }
    }
    out
}

/// Visit every lane along `axis`; the closure receives the flat offsets of
/// one lane.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(&[usize])) {
    assert!(axis < shape.len(), "axis {axis} out of range for shape {shape:?}");
    let axis_len = shape[axis];
    assert!(axis_len > 0, "empty axis {axis} in shape {shape:?}");
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut lane = vec![0usize; axis_len];
    for o in 0..outer {
        for i in 0..inner {
            for (j, slot) in lane.iter_mut().enumerate() {
                *slot = (o * axis_len + j) * inner + i;
            }
            f(&lane);
        }
    }
}

fn softmax_raw(a: &Tensor, axis: usize, log: bool) -> Vec<f32> {
    let src = a.data();
    let mut out = vec![0.0f32; src.len()];
    for_each_lane(a.shape(), axis, |lane| {
        let mut mx = f64::NEG_INFINITY;
        for &o in lane {
            mx = mx.max(src[o] as f64);
        }
        let mut denom = 0.0f64;
        for &o in lane {
            denom += ((src[o] as f64) - mx).exp();
        }
        let log_denom = denom.ln();
        for &o in lane {
            let centered = src[o] as f64 - mx;
            out[o] = if log { (centered - log_denom) as f32 } else { (centered - log_denom).exp() as f32 };
        }
    });
    out
}

pub(crate) fn argmax_slice(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f32>]) -> Tensor {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = t(&[vec![3.0, 4.0], vec![5.0, 6.0]]);
        let c = tape.matmul(&a, &b);
        assert_eq!(c.data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_row_col() {
        let mut tape = Tape::new();
        let a = t(&[vec![1.0, 2.0]]);
        let b = t(&[vec![3.0], vec![4.0]]);
        let c = tape.matmul(&a, &b);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    #[should_panic(expected = "inner dimensions disagree")]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = t(&[vec![1.0, 2.0]]);
        let b = t(&[vec![3.0, 4.0]]);
        let _ = tape.matmul(&a, &b);
    }

    #[test]
    fn matmul_gradient_matches_rule() {
        // d/da sum(a·b) = bᵀ broadcast over rows
        let mut tape = Tape::new();
        let a = tape.leaf(&t(&[vec![1.0, 2.0]]));
        let b = t(&[vec![3.0], vec![4.0]]);
        let c = tape.matmul(&a, &b);
        let loss = tape.sum(&c);
        let grads = tape.backward(&loss);
        assert_eq!(grads.wrt_or_panic(&a), &[3.0, 4.0]);
    }

    #[test]
    fn softmax_uniform_and_forced() {
        let mut tape = Tape::new();
        let x = Tensor::from_slice(&[0.0, 0.0, 0.0]);
        let y = tape.softmax(&x, 0);
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let single = tape.softmax(&Tensor::from_slice(&[42.0]), 0);
        assert_eq!(single.data(), &[1.0]);
        let forced = tape.softmax(&Tensor::from_slice(&[0.0, 3.0f32.ln()]), 0);
        assert!((forced.data()[0] - 0.25).abs() < 1e-7);
        assert!((forced.data()[1] - 0.75).abs() < 1e-7);
    }

    #[test]
    #[should_panic(expected = "empty axis")]
    fn softmax_empty_axis() {
        let mut tape = Tape::new();
        let x = Tensor::new(vec![0], vec![]);
        let _ = tape.softmax(&x, 0);
    }

    #[test]
    fn backward_square() {
        // f(x) = x² at x = 3 → grad 6
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0));
        let y = tape.mul(&x, &x);
        let loss = tape.sum(&y);
        let grads = tape.backward(&loss);
        assert_eq!(grads.wrt_or_panic(&x), &[6.0]);
    }

    #[test]
    fn backward_log_softmax_component() {
        // f(x) = log softmax(x)[0] at x = [0,0] → grad [0.5, −0.5]
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_slice(&[0.0, 0.0]));
        let ls = tape.log_softmax(&x, 0);
        let picked = tape.reshape(&ls, vec![1, 2]);
        let first = tape.select_per_row(&picked, &[0]);
        let loss = tape.sum(&first);
        let grads = tape.backward(&loss);
        let g = grads.wrt_or_panic(&x);
        assert!((g[0] - 0.5).abs() < 1e-6);
        assert!((g[1] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(2.0));
        let y = tape.leaf(&Tensor::scalar(5.0));
        let loss = tape.sum(&x);
        let grads = tape.backward(&loss);
        assert_eq!(grads.wrt_or_panic(&y), &[0.0]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_slice(&[1.0, 2.0]));
        let _ = tape.backward(&x);
    }

    #[test]
    fn backward_is_pure() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_slice(&[0.3, -0.7]));
        let e = tape.exp(&x);
        let loss = tape.mean(&e);
        let g1 = tape.backward(&loss);
        let g2 = tape.backward(&loss);
        assert_eq!(g1.wrt_or_panic(&x), g2.wrt_or_panic(&x));
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let mut tape = Tape::new();
        let a = Tensor::from_slice(&[1.0, 2.0]);
        let b = Tensor::from_slice(&[3.0, 4.0]);
        let c = tape.add(&a, &b);
        assert!(!c.is_tracked());
        assert_eq!(tape.num_nodes(), 0);
    }
}
