//! Dense f64 tensors and a define-by-run reverse-mode differentiation tape.
//!
//! The tape is rebuilt for every training step: parameters are registered
//! with [`Tape::watch`], operations record nodes only when at least one
//! operand is already on the tape, and [`Tape::backward`] walks the nodes in
//! reverse insertion order. Evaluating a model with unwatched parameters
//! therefore records nothing and behaves as a plain forward pass.
//!
//! All reductions use a fixed accumulation order so that re-running the same
//! graph on the same inputs is bitwise reproducible.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Handle of a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

/// Dense row-major tensor of f64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    node: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorError {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Shape does not match the amount of data provided.
    BadShape { shape: Vec<usize>, data_len: usize },
    /// A scalar was required (e.g. as a loss).
    NotScalar {
        op: &'static str,
        shape: Vec<usize>,
    },
    /// The tensor is not recorded on this tape.
    NotOnTape { op: &'static str },
    /// An evaluation produced a non-finite value.
    NonFinite { op: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            TensorError::BadShape { shape, data_len } => {
                write!(f, "shape {shape:?} does not match {data_len} values")
            }
            TensorError::NotScalar { op, shape } => {
                write!(f, "{op}: expected a scalar, got shape {shape:?}")
            }
            TensorError::NotOnTape { op } => write!(f, "{op}: tensor is not on the tape"),
            TensorError::NonFinite { op } => write!(f, "{op}: non-finite value encountered"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TensorError {}

impl Tensor {
    /// Builds a tensor, checking that `shape` (all dimensions positive)
    /// matches the number of values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if shape.contains(&0) || numel != data.len() {
            return Err(TensorError::BadShape {
                shape,
                data_len: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            node: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            node: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            node: None,
        }
    }

    /// 1×m row vector.
    pub fn row(values: Vec<f64>) -> Self {
        let m = values.len();
        Tensor {
            shape: vec![1, m],
            data: values,
            requires_grad: false,
            node: None,
        }
    }

    /// rows×cols matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Marks this tensor as a trainable parameter.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let mut t = Tensor::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw values. Clears any tape association since
    /// the recorded value would no longer match.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.node = None;
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(TensorError::NotScalar {
                op: "item",
                shape: self.shape.clone(),
            })
        }
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    /// Copy with no tape association, useful for perturb-and-evaluate loops.
    pub fn detached(&self) -> Tensor {
        let mut t = self.clone();
        t.node = None;
        t
    }

    fn rows_cols(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        if self.shape.len() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: Vec::new(),
            })
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { lhs: NodeId, rhs: NodeId },
    Add { lhs: NodeId, rhs: NodeId },
    Sub { lhs: NodeId, rhs: NodeId },
    Scale { input: NodeId, factor: f64 },
    Tanh { input: NodeId },
    AddBias { input: NodeId, bias: NodeId },
    Mse { pred: NodeId, target: NodeId },
    Sum { input: NodeId },
    NarrowCols { input: NodeId, start: usize },
    ConcatCols { lhs: NodeId, rhs: NodeId },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], keyed by node id. Tensors that
/// never influenced the loss simply have no entry (their gradient is zero).
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        t.node.and_then(|id| self.by_node(id))
    }

    pub fn by_node(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

/// Append-only record of operations for one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor as a differentiable leaf and returns the tracked
    /// copy. Gradients for it can be looked up after `backward`.
    pub fn watch(&mut self, t: &Tensor) -> Tensor {
        let id = self.push(Op::Leaf, t.shape.clone(), t.data.clone(), true);
        Tensor {
            shape: t.shape.clone(),
            data: t.data.clone(),
            requires_grad: true,
            node: Some(id),
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            shape,
            data,
            requires_grad,
        });
        id
    }

    /// Node id for an operand, interning constants on demand.
    fn operand(&mut self, t: &Tensor) -> NodeId {
        match t.node {
            Some(id) => {
                debug_assert_eq!(self.nodes[id.0].shape, t.shape, "tensor from another tape");
                id
            }
            None => self.push(Op::Leaf, t.shape.clone(), t.data.clone(), false),
        }
    }

    fn finish(
        &mut self,
        inputs: &[&Tensor],
        make_op: impl FnOnce(&[NodeId]) -> Op,
        shape: Vec<usize>,
        data: Vec<f64>,
    ) -> Tensor {
        debug_check_finite(inputs, &data);
        if inputs.iter().any(|t| t.node.is_some()) {
            let ids: Vec<NodeId> = inputs.iter().map(|t| self.operand(t)).collect();
            let requires_grad = ids.iter().any(|id| self.nodes[id.0].requires_grad);
            let id = self.push(make_op(&ids), shape.clone(), data.clone(), requires_grad);
            Tensor {
                shape,
                data,
                requires_grad,
                node: Some(id),
            }
        } else {
            Tensor {
                shape,
                data,
                requires_grad: false,
                node: None,
            }
        }
    }

    /// Matrix product a[m×k] · b[k×n]. The inner accumulation runs over
    /// ascending k for reproducibility.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let (m, k) = a.rows_cols("matmul")?;
        let (k2, n) = b.rows_cols("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_nn(&a.data, &b.data, m, k, n, &mut out);
        Ok(self.finish(
            &[a, b],
            |ids| Op::MatMul {
                lhs: ids[0],
                rhs: ids[1],
            },
            vec![m, n],
            out,
        ))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.zip("add", a, b)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.zip("sub", a, b)
    }

    fn zip(&mut self, op: &'static str, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        if a.shape != b.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let data: Vec<f64> = if op == "add" {
            a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect()
        } else {
            a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect()
        };
        let make = |ids: &[NodeId]| {
            if op == "add" {
                Op::Add {
                    lhs: ids[0],
                    rhs: ids[1],
                }
            } else {
                Op::Sub {
                    lhs: ids[0],
                    rhs: ids[1],
                }
            }
        };
        Ok(self.finish(&[a, b], make, a.shape.clone(), data))
    }

    pub fn scale(&mut self, a: &Tensor, factor: f64) -> Result<Tensor, TensorError> {
        let data: Vec<f64> = a.data.iter().map(|x| x * factor).collect();
        Ok(self.finish(
            &[a],
            |ids| Op::Scale {
                input: ids[0],
                factor,
            },
            a.shape.clone(),
            data,
        ))
    }

    pub fn tanh(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        let data: Vec<f64> = a.data.iter().map(|&x| math::tanh(x)).collect();
        Ok(self.finish(
            &[a],
            |ids| Op::Tanh { input: ids[0] },
            a.shape.clone(),
            data,
        ))
    }

    /// Adds a 1×c bias row to every row of a r×c matrix.
    pub fn add_bias(&mut self, a: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
        let (r, c) = a.rows_cols("add_bias")?;
        let (br, bc) = bias.rows_cols("add_bias")?;
        if br != 1 || bc != c {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: a.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let mut data = a.data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += bias.data[j];
            }
        }
        Ok(self.finish(
            &[a, bias],
            |ids| Op::AddBias {
                input: ids[0],
                bias: ids[1],
            },
            a.shape.clone(),
            data,
        ))
    }

    /// Mean over all elements of the squared difference.
    pub fn mse(&mut self, pred: &Tensor, target: &Tensor) -> Result<Tensor, TensorError> {
        if pred.shape != target.shape {
            return Err(TensorError::ShapeMismatch {
                op: "mse",
                lhs: pred.shape.clone(),
                rhs: target.shape.clone(),
            });
        }
        let mut s = 0.0;
        for (p, t) in pred.data.iter().zip(&target.data) {
            let d = p - t;
            s += d * d;
        }
        let value = s / pred.data.len() as f64;
        Ok(self.finish(
            &[pred, target],
            |ids| Op::Mse {
                pred: ids[0],
                target: ids[1],
            },
            vec![1],
            vec![value],
        ))
    }

    /// Sum of all elements.
    pub fn sum(&mut self, a: &Tensor) -> Result<Tensor, TensorError> {
        let mut s = 0.0;
        for &x in &a.data {
            s += x;
        }
        Ok(self.finish(
            &[a],
            |ids| Op::Sum { input: ids[0] },
            vec![1],
            vec![s],
        ))
    }

    /// Columns `[start, start+len)` of a 2-D tensor.
    pub fn narrow_cols(
        &mut self,
        a: &Tensor,
        start: usize,
        len: usize,
    ) -> Result<Tensor, TensorError> {
        let (r, c) = a.rows_cols("narrow_cols")?;
        if start + len > c || len == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "narrow_cols",
                lhs: a.shape.clone(),
                rhs: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&a.data[i * c + start..i * c + start + len]);
        }
        Ok(self.finish(
            &[a],
            |ids| Op::NarrowCols {
                input: ids[0],
                start,
            },
            vec![r, len],
            data,
        ))
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let (r, ca) = a.rows_cols("concat_cols")?;
        let (rb, cb) = b.rows_cols("concat_cols")?;
        if r != rb {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(&a.data[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&b.data[i * cb..(i + 1) * cb]);
        }
        Ok(self.finish(
            &[a, b],
            |ids| Op::ConcatCols {
                lhs: ids[0],
                rhs: ids[1],
            },
            vec![r, ca + cb],
            data,
        ))
    }

    /// Reverse-mode sweep from a scalar loss. Nodes are visited in reverse
    /// insertion order, which is a reverse topological order of the graph.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients, TensorError> {
        let loss_id = loss.node.ok_or(TensorError::NotOnTape { op: "backward" })?;
        if !loss.is_scalar() {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: loss.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss_id.0] = Some(vec![1.0]);

        for id in (0..=loss_id.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(id, &grad, &mut grads);
            }
            grads[id] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, grad: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        match node.op {
            Op::Leaf => {}
            Op::MatMul { lhs, rhs } => {
                let (m, k) = (self.nodes[lhs.0].shape[0], self.nodes[lhs.0].shape[1]);
                let n = self.nodes[rhs.0].shape[1];
                if self.nodes[lhs.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    matmul_nt(grad, &self.nodes[rhs.0].data, m, n, k, &mut da);
                    self.accumulate(lhs, &da, grads);
                }
                if self.nodes[rhs.0].requires_grad {
                    let mut db = vec![0.0; k * n];
                    matmul_tn(&self.nodes[lhs.0].data, grad, m, k, n, &mut db);
                    self.accumulate(rhs, &db, grads);
                }
            }
            Op::Add { lhs, rhs } => {
                self.accumulate(lhs, grad, grads);
                self.accumulate(rhs, grad, grads);
            }
            Op::Sub { lhs, rhs } => {
                self.accumulate(lhs, grad, grads);
                if self.nodes[rhs.0].requires_grad {
                    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                    self.accumulate(rhs, &neg, grads);
                }
            }
            Op::Scale { input, factor } => {
                if self.nodes[input.0].requires_grad {
                    let dg: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                    self.accumulate(input, &dg, grads);
                }
            }
            Op::Tanh { input } => {
                if self.nodes[input.0].requires_grad {
                    let dg: Vec<f64> = grad
                        .iter()
                        .zip(&node.data)
                        .map(|(g, &y)| g * (1.0 - y * y))
                        .collect();
                    self.accumulate(input, &dg, grads);
                }
            }
            Op::AddBias { input, bias } => {
                self.accumulate(input, grad, grads);
                if self.nodes[bias.0].requires_grad {
                    let c = self.nodes[bias.0].shape[1];
                    let r = node.shape[0];
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] += grad[i * c + j];
                        }
                    }
                    self.accumulate(bias, &db, grads);
                }
            }
            Op::Mse { pred, target } => {
                let g = grad[0];
                let count = self.nodes[pred.0].data.len() as f64;
                let p = &self.nodes[pred.0].data;
                let t = &self.nodes[target.0].data;
                if self.nodes[pred.0].requires_grad {
                    let dp: Vec<f64> = p
                        .iter()
                        .zip(t)
                        .map(|(pi, ti)| g * 2.0 * (pi - ti) / count)
                        .collect();
                    self.accumulate(pred, &dp, grads);
                }
                if self.nodes[target.0].requires_grad {
                    let dt: Vec<f64> = p
                        .iter()
                        .zip(t)
                        .map(|(pi, ti)| -g * 2.0 * (pi - ti) / count)
                        .collect();
                    self.accumulate(target, &dt, grads);
                }
            }
            Op::Sum { input } => {
                if self.nodes[input.0].requires_grad {
                    let dg = vec![grad[0]; self.nodes[input.0].data.len()];
                    self.accumulate(input, &dg, grads);
                }
            }
            Op::NarrowCols { input, start } => {
                if self.nodes[input.0].requires_grad {
                    let (r, c) = (self.nodes[input.0].shape[0], self.nodes[input.0].shape[1]);
                    let len = node.shape[1];
                    let mut dg = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..len {
                            dg[i * c + start + j] = grad[i * len + j];
                        }
                    }
                    self.accumulate(input, &dg, grads);
                }
            }
            Op::ConcatCols { lhs, rhs } => {
                let ca = self.nodes[lhs.0].shape[1];
                let cb = self.nodes[rhs.0].shape[1];
                let r = node.shape[0];
                if self.nodes[lhs.0].requires_grad {
                    let mut da = vec![0.0; r * ca];
                    for i in 0..r {
                        da[i * ca..(i + 1) * ca]
                            .copy_from_slice(&grad[i * (ca + cb)..i * (ca + cb) + ca]);
                    }
                    self.accumulate(lhs, &da, grads);
                }
                if self.nodes[rhs.0].requires_grad {
                    let mut db = vec![0.0; r * cb];
                    for i in 0..r {
                        db[i * cb..(i + 1) * cb]
                            .copy_from_slice(&grad[i * (ca + cb) + ca..(i + 1) * (ca + cb)]);
                    }
                    self.accumulate(rhs, &db, grads);
                }
            }
        }
    }

    fn accumulate(&self, id: NodeId, contribution: &[f64], grads: &mut [Option<Vec<f64>>]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].data.len()]);
        for (g, c) in slot.iter_mut().zip(contribution) {
            *g += c;
        }
    }
}

// Debug-build invariant: operations on finite inputs of bounded magnitude
// must produce finite values. Unbounded inputs (a diverging training run)
// are exempt; the training loop reports those as a divergence error.
#[cfg(debug_assertions)]
fn debug_check_finite(inputs: &[&Tensor], out: &[f64]) {
    let bounded = inputs
        .iter()
        .all(|t| t.data.iter().all(|v| v.is_finite() && v.abs() <= 1e100));
    if bounded {
        debug_assert!(
            out.iter().all(|v| v.is_finite()),
            "non-finite result from bounded finite inputs"
        );
    }
}

#[cfg(not(debug_assertions))]
fn debug_check_finite(_inputs: &[&Tensor], _out: &[f64]) {}

// C[m×n] += A[m×k] · B[k×n]; per output element the k terms are added in
// ascending order, so the i-p-j loop matches the naive i-j-p result bitwise.
fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

// C[m×k] += G[m×n] · Bᵀ with B stored as [k×n].
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += grow[j] * brow[j];
            }
            out[i * k + p] += s;
        }
    }
}

// C[k×n] += Aᵀ · G with A stored as [m×k], G as [m×n].
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * grow[j];
            }
        }
    }
}

/// Compares the analytic gradient of `f` at `theta` against central finite
/// differences with step `eps`, returning the worst relative error
/// `|analytic - numeric| / max(1, |analytic|)` over all coordinates.
pub fn grad_check<F>(f: F, theta: &Tensor, eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &Tensor) -> Result<Tensor, TensorError>,
{
    let mut tape = Tape::new();
    let bound = tape.watch(theta);
    let loss = f(&mut tape, &bound)?;
    let value = loss.item()?;
    if !value.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    let grads = tape.backward(&loss)?;
    let analytic: Vec<f64> = match grads.get(&bound) {
        Some(g) => g.to_vec(),
        None => vec![0.0; theta.numel()],
    };

    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let eval = |delta: f64| -> Result<f64, TensorError> {
            let mut probe = theta.detached();
            probe.data_mut()[i] += delta;
            let mut scratch = Tape::new();
            let out = f(&mut scratch, &probe)?.item()?;
            if out.is_finite() {
                Ok(out)
            } else {
                Err(TensorError::NonFinite { op: "grad_check" })
            }
        };
        let numeric = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
        let denom = math::abs(a).max(1.0);
        worst = worst.max(math::abs(a - numeric) / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matmul_identity_returns_operand() {
        let mut tape = Tape::new();
        let a = Tensor::matrix(2, 2, vec![1.5, -2.0, 0.25, 4.0]).unwrap();
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = tape.matmul(&eye, &a).unwrap();
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn matmul_hand_value() {
        let mut tape = Tape::new();
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let out = tape.matmul(&a, &b).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 5]);
        match tape.matmul(&a, &b) {
            Err(TensorError::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4, 5]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn matmul_with_identity_is_bitwise_stable() {
        let mut tape = Tape::new();
        let a = Tensor::matrix(3, 3, vec![0.1, 2.3, -0.7, 1.9, -3.1, 0.5, 4.2, 0.01, -9.9]).unwrap();
        let eye = Tensor::matrix(
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let x = Tensor::matrix(3, 1, vec![0.3, -1.25, 7.5]).unwrap();
        let ai = tape.matmul(&a, &eye).unwrap();
        let left = tape.matmul(&ai, &x).unwrap();
        let right = tape.matmul(&a, &x).unwrap();
        assert_eq!(left.data(), right.data());
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let z = Tensor::row(vec![0.0]);
        assert_eq!(tape.tanh(&z).unwrap().data(), &[0.0]);
        let v = Tensor::row(vec![1.0, -1.0]);
        assert_eq!(tape.scale(&v, 2.0).unwrap().data(), &[2.0, -2.0]);
    }

    #[test]
    fn add_shape_mismatch() {
        let mut tape = Tape::new();
        let a = Tensor::row(vec![1.0, 2.0]);
        let b = Tensor::row(vec![3.0]);
        assert!(matches!(
            tape.add(&a, &b),
            Err(TensorError::ShapeMismatch { op: "add", .. })
        ));
    }

    #[test]
    fn mse_values() {
        let mut tape = Tape::new();
        let p = Tensor::row(vec![1.0, 2.0]);
        assert_eq!(tape.mse(&p, &p).unwrap().item().unwrap(), 0.0);
        let zeros = Tensor::row(vec![0.0, 0.0]);
        let ones = Tensor::row(vec![1.0, 1.0]);
        assert_eq!(tape.mse(&zeros, &ones).unwrap().item().unwrap(), 1.0);
        let three = Tensor::row(vec![3.0]);
        let zero = Tensor::row(vec![0.0]);
        assert_eq!(tape.mse(&three, &zero).unwrap().item().unwrap(), 9.0);
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let theta = Tensor::param(vec![1, 3], vec![0.5, -2.0, 3.0]).unwrap();
        let bound = tape.watch(&theta);
        let loss = tape.sum(&bound).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&bound).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_chain_rule_hand_value() {
        // loss = mse(W·x, y) with W=2, x=3, y=0 → dL/dW = 2·6·3 = 36
        let mut tape = Tape::new();
        let w = Tensor::param(vec![1, 1], vec![2.0]).unwrap();
        let bound = tape.watch(&w);
        let x = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let y = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let pred = tape.matmul(&bound, &x).unwrap();
        let loss = tape.mse(&pred, &y).unwrap();
        assert_eq!(loss.item().unwrap(), 36.0);
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&bound).unwrap(), &[36.0]);
    }

    #[test]
    fn off_path_parameter_has_no_gradient() {
        let mut tape = Tape::new();
        let used = tape.watch(&Tensor::param(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let unused = tape.watch(&Tensor::param(vec![1, 2], vec![5.0, 6.0]).unwrap());
        let loss = tape.sum(&used).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert!(grads.get(&used).is_some());
        assert!(grads.get(&unused).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let t = tape.watch(&Tensor::param(vec![1, 2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            tape.backward(&t),
            Err(TensorError::NotScalar { .. })
        ));
    }

    #[test]
    fn grad_check_square_function() {
        let theta = Tensor::param(vec![1], vec![3.0]).unwrap();
        let err = grad_check(
            |tape, t| {
                let sq = tape.mse(t, &Tensor::scalar(0.0))?;
                tape.scale(&sq, 1.0)
            },
            &theta,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn grad_check_constant_function() {
        let theta = Tensor::param(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let err = grad_check(
            |tape, _t| {
                let c = tape.watch(&Tensor::param(vec![1], vec![4.0]).unwrap());
                tape.scale(&c, 0.0)
            },
            &theta,
            1e-4,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn grad_check_every_op_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let vals: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let theta = Tensor::param(vec![2, 3], vals).unwrap();
            let fixed: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let other = Tensor::matrix(3, 2, fixed.clone()).unwrap();
            let same = Tensor::matrix(2, 3, fixed).unwrap();
            let bias = Tensor::row(vec![0.3, -0.8, 0.1]);

            type Case<'a> = Box<dyn Fn(&mut Tape, &Tensor) -> Result<Tensor, TensorError> + 'a>;
            let cases: Vec<(&str, Case)> = vec![
                ("matmul", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let y = tp.matmul(t, &other)?;
                    tp.mse(&y, &Tensor::zeros(vec![2, 2]))
                })),
                ("add", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let y = tp.add(t, &same)?;
                    tp.mse(&y, &Tensor::zeros(vec![2, 3]))
                })),
                ("sub", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let y = tp.sub(t, &same)?;
                    tp.sum(&y)
                })),
                ("scale", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let y = tp.scale(t, -1.7)?;
                    tp.mse(&y, &same)
                })),
                ("tanh", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let y = tp.tanh(t)?;
                    tp.mse(&y, &Tensor::zeros(vec![2, 3]))
                })),
                ("add_bias", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let y = tp.add_bias(t, &bias)?;
                    tp.mse(&y, &same)
                })),
                ("narrow_concat", Box::new(|tp: &mut Tape, t: &Tensor| {
                    let a = tp.narrow_cols(t, 0, 2)?;
                    let b = tp.narrow_cols(t, 2, 1)?;
                    let y = tp.concat_cols(&b, &a)?;
                    tp.mse(&y, &Tensor::zeros(vec![2, 3]))
                })),
            ];
            for (name, f) in cases {
                let err = grad_check(f.as_ref(), &theta, 1e-4).unwrap();
                assert!(err <= 1e-5, "{name}: relative error {err}");
            }
        }
    }

    #[test]
    fn rerunning_a_tape_is_bitwise_identical() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();

        let run = || {
            let mut tape = Tape::new();
            let wt = tape.watch(&Tensor::param(vec![4, 3], w.clone()).unwrap());
            let xt = Tensor::matrix(2, 4, x.clone()).unwrap();
            let h = tape.matmul(&xt, &wt).unwrap();
            let a = tape.tanh(&h).unwrap();
            let loss = tape.mse(&a, &Tensor::zeros(vec![2, 3])).unwrap();
            let grads = tape.backward(&loss).unwrap();
            (loss.item().unwrap(), grads.get(&wt).unwrap().to_vec())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(g1, g2);
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let mut tape = Tape::new();
        let a = Tensor::row(vec![1.0, 2.0]);
        let b = Tensor::row(vec![3.0, 4.0]);
        let _ = tape.add(&a, &b).unwrap();
        assert!(tape.is_empty());
    }
}
