//! Define-then-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order, so a node's inputs always have
//! smaller ids. Parameters live inside the graph and keep their values across
//! forward passes; everything else is recomputed from the bindings on every
//! call to [`Graph::forward`].

use std::collections::{BTreeMap, HashMap};

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied to every logarithm argument.
pub const LOG_CLAMP_MIN: f64 = 1e-8;
/// Upper clamp applied to every logarithm argument.
pub const LOG_CLAMP_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensors fed to the graph's inputs (and optionally to sample leaves,
/// which freezes their noise).
pub type Bindings = HashMap<String, Tensor>;

/// Parameter name to tensor.
pub type ParamStore = BTreeMap<String, Tensor>;

/// Parameter name to gradient.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// N(0, 1)
    Gaussian,
    /// Gumbel(0, 1) = -log(-log u), u ~ U(0, 1)
    Gumbel,
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Param(String),
    Constant(Tensor),
    /// Noise leaf with as many rows as `like` and `cols` columns.
    Sample {
        name: String,
        noise: Noise,
        like: NodeId,
        cols: usize,
    },
    MatMul(NodeId, NodeId),
    /// Adds a `[1, c]` row vector to every row.
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine {
        x: NodeId,
        scale: f64,
        shift: f64,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    /// Row-wise softmax inside each column block; columns outside every block
    /// pass through unchanged.
    SoftmaxBlocks {
        x: NodeId,
        blocks: Vec<(usize, usize)>,
    },
    Sum(NodeId),
    Mean(NodeId),
    /// Sum of all entries divided by the row count: per-sample sums averaged
    /// over the minibatch.
    BatchMean(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
        end: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant(_) => "constant",
            Op::Sample { .. } => "sample",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Clamp { .. } => "clamp",
            Op::SoftmaxBlocks { .. } => "softmax_blocks",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::BatchMean(_) => "batch_mean",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => vec![],
            Op::Sample { like, .. } => vec![*like],
            Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b) => {
                vec![*a, *b]
            }
            Op::Affine { x, .. }
            | Op::Clamp { x, .. }
            | Op::SoftmaxBlocks { x, .. }
            | Op::Slice { x, .. } => vec![*x],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Square(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::BatchMean(x) => vec![*x],
            Op::Concat(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// Gradients of a scalar loss with respect to every node that reaches it.
#[derive(Debug)]
pub struct NodeGradients {
    grads: Vec<Option<Tensor>>,
}

impl NodeGradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: ParamStore,
    param_nodes: BTreeMap<String, NodeId>,
    inputs: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op) -> NodeId {
        debug_assert!(op.inputs().iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node { op, value: None });
        NodeId(self.nodes.len() - 1)
    }

    // ---- leaves -------------------------------------------------------------

    /// Named input; the same name always maps to the same node.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.inputs.get(name) {
            return id;
        }
        let id = self.push(Op::Input(name.to_string()));
        self.inputs.insert(name.to_string(), id);
        id
    }

    /// Registers a trainable parameter. Registering an existing name fails.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        if self.param_nodes.contains_key(name) {
            return Err(Error::Invalid(format!(
                "parameter `{name}` registered twice"
            )));
        }
        let id = self.push(Op::Param(name.to_string()));
        self.nodes[id.0].value = Some(value.clone());
        self.params.insert(name.to_string(), value);
        self.param_nodes.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant(value))
    }

    /// Noise leaf shaped `[rows(like), cols]`. Binding a tensor under `name`
    /// replaces the draw.
    pub fn sample(&mut self, name: &str, noise: Noise, like: NodeId, cols: usize) -> NodeId {
        self.push(Op::Sample {
            name: name.to_string(),
            noise,
            like,
            cols,
        })
    }

    // ---- operations ---------------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddRow(x, bias))
    }

    /// Scales every row of `x` elementwise by a `[1, cols]` row.
    pub fn mul_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        self.push(Op::MulRow(x, row))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        self.push(Op::Affine { x, scale, shift })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Exp(x))
    }

    /// Natural log of the argument clamped to `[LOG_CLAMP_MIN, LOG_CLAMP_MAX]`.
    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Log(x))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Square(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.push(Op::Clamp { x, lo, hi })
    }

    pub fn softmax_blocks(&mut self, x: NodeId, blocks: Vec<(usize, usize)>) -> NodeId {
        self.push(Op::SoftmaxBlocks { x, blocks })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x))
    }

    pub fn batch_mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::BatchMean(x))
    }

    pub fn concat(&mut self, xs: Vec<NodeId>) -> NodeId {
        self.push(Op::Concat(xs))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        self.push(Op::Slice { x, start, end })
    }

    // ---- parameters ---------------------------------------------------------

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Mutable access to parameter values. Changes take effect on the next
    /// forward pass.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_value(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.param_nodes.get(name).copied()
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Invalid(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Cached value from the most recent forward pass.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id.0)
            .and_then(|n| n.value.as_ref())
            .ok_or(Error::NotEvaluated(id.0))
    }

    // ---- evaluation ---------------------------------------------------------

    fn ancestors(&self, roots: &[NodeId]) -> Vec<bool> {
        let mut needed = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots.to_vec();
        while let Some(id) = stack.pop() {
            if needed[id.0] {
                continue;
            }
            needed[id.0] = true;
            stack.extend(self.nodes[id.0].op.inputs());
        }
        needed
    }

    /// Evaluates `root` and everything it depends on; returns the root value.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        root: NodeId,
        bindings: &Bindings,
        rng: &mut R,
    ) -> Result<Tensor> {
        self.evaluate(&[root], bindings, rng)?;
        Ok(self.value(root)?.clone())
    }

    /// Evaluates every node needed by `roots`, in id order.
    pub fn evaluate<R: Rng + ?Sized>(
        &mut self,
        roots: &[NodeId],
        bindings: &Bindings,
        rng: &mut R,
    ) -> Result<()> {
        let needed = self.ancestors(roots);
        for (idx, _) in needed.iter().enumerate().filter(|(_, &n)| n) {
            let value = self.compute(idx, bindings, rng)?;
            if !value.all_finite() {
                return Err(Error::NonFinite {
                    node: idx,
                    op: self.nodes[idx].op.name(),
                });
            }
            self.nodes[idx].value = Some(value);
        }
        Ok(())
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0]
            .value
            .as_ref()
            .expect("inputs are evaluated before consumers")
    }

    fn compute<R: Rng + ?Sized>(
        &self,
        idx: usize,
        bindings: &Bindings,
        rng: &mut R,
    ) -> Result<Tensor> {
        let op = &self.nodes[idx].op;
        let shape_err = |detail: String| Error::Shape {
            node: idx,
            op: op.name(),
            detail,
        };
        let out = match op {
            Op::Input(name) => {
                let t = bindings
                    .get(name)
                    .ok_or_else(|| Error::Unbound(name.clone()))?;
                if t.rank() != 2 {
                    return Err(shape_err(format!("input `{name}` must be rank 2")));
                }
                t.clone()
            }
            Op::Param(name) => self.params[name].clone(),
            Op::Constant(t) => t.clone(),
            Op::Sample {
                name,
                noise,
                like,
                cols,
            } => {
                let rows = self.val(*like).rows();
                if let Some(t) = bindings.get(name) {
                    if t.shape() != [rows, *cols] {
                        return Err(shape_err(format!(
                            "bound noise `{name}` has shape {:?}, expected [{rows}, {cols}]",
                            t.shape()
                        )));
                    }
                    t.clone()
                } else {
                    let data = match noise {
                        Noise::Gaussian => (0..rows * cols)
                            .map(|_| rng.sample::<f64, _>(StandardNormal))
                            .collect(),
                        Noise::Gumbel => (0..rows * cols)
                            .map(|_| {
                                let u: f64 = rng.sample(Open01);
                                -(-u.ln()).ln()
                            })
                            .collect(),
                    };
                    Tensor::matrix(rows, *cols, data)?
                }
            }
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.cols() != b.rows() {
                    return Err(shape_err(format!("{:?} x {:?}", a.shape(), b.shape())));
                }
                let mut out = Tensor::zeros(a.rows(), b.cols());
                gemm(
                    a.data(),
                    a.rows(),
                    a.cols(),
                    false,
                    b.data(),
                    b.rows(),
                    b.cols(),
                    false,
                    out.data_mut(),
                );
                out
            }
            Op::MulRow(x, row) => {
                let (x, r) = (self.val(*x), self.val(*row));
                if r.rows() != 1 || r.cols() != x.cols() {
                    return Err(shape_err(format!(
                        "row {:?} does not broadcast over {:?}",
                        r.shape(),
                        x.shape()
                    )));
                }
                let mut out = x.clone();
                let c = x.cols();
                for line in out.data_mut().chunks_mut(c) {
                    for (o, rv) in line.iter_mut().zip(r.data()) {
                        *o *= rv;
                    }
                }
                out
            }
            Op::AddRow(x, bias) => {
                let (x, b) = (self.val(*x), self.val(*bias));
                if b.rows() != 1 || b.cols() != x.cols() {
                    return Err(shape_err(format!(
                        "bias {:?} does not broadcast over {:?}",
                        b.shape(),
                        x.shape()
                    )));
                }
                let mut out = x.clone();
                let c = x.cols();
                for row in out.data_mut().chunks_mut(c) {
                    for (o, bv) in row.iter_mut().zip(b.data()) {
                        *o += bv;
                    }
                }
                out
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                if a.shape() != b.shape() {
                    return Err(shape_err(format!("{:?} vs {:?}", a.shape(), b.shape())));
                }
                let f: fn(f64, f64) -> f64 = match op {
                    Op::Add(..) => |x, y| x + y,
                    Op::Sub(..) => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let data = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect();
                Tensor::new(a.shape().to_vec(), data)?
            }
            Op::Affine { x, scale, shift } => self.val(*x).map(|v| scale * v + shift),
            Op::Relu(x) => self.val(*x).map(|v| v.max(0.0)),
            Op::Sigmoid(x) => self.val(*x).map(sigmoid),
            Op::Exp(x) => self.val(*x).map(f64::exp),
            Op::Log(x) => self
                .val(*x)
                .map(|v| v.clamp(LOG_CLAMP_MIN, LOG_CLAMP_MAX).ln()),
            Op::Square(x) => self.val(*x).map(|v| v * v),
            Op::Clamp { x, lo, hi } => self.val(*x).map(|v| v.clamp(*lo, *hi)),
            Op::SoftmaxBlocks { x, blocks } => {
                let x = self.val(*x);
                if let Some(&(s, e)) = blocks.iter().find(|&&(s, e)| s >= e || e > x.cols()) {
                    return Err(shape_err(format!(
                        "block {s}..{e} invalid for width {}",
                        x.cols()
                    )));
                }
                let mut out = x.clone();
                let c = x.cols();
                for row in out.data_mut().chunks_mut(c) {
                    for &(s, e) in blocks {
                        softmax_in_place(&mut row[s..e]);
                    }
                }
                out
            }
            Op::Sum(x) => Tensor::scalar(self.val(*x).sum()),
            Op::Mean(x) => {
                let x = self.val(*x);
                Tensor::scalar(x.sum() / x.len() as f64)
            }
            Op::BatchMean(x) => {
                let x = self.val(*x);
                Tensor::scalar(x.sum() / x.rows() as f64)
            }
            Op::Concat(xs) => {
                let parts: Vec<&Tensor> = xs.iter().map(|&i| self.val(i)).collect();
                let rows = parts[0].rows();
                if parts.iter().any(|p| p.rows() != rows) {
                    let shapes: Vec<_> = parts.iter().map(|p| p.shape().to_vec()).collect();
                    return Err(shape_err(format!("row counts differ: {shapes:?}")));
                }
                let width: usize = parts.iter().map(|p| p.cols()).sum();
                let mut data = Vec::with_capacity(rows * width);
                for r in 0..rows {
                    for p in &parts {
                        data.extend_from_slice(p.row_slice(r));
                    }
                }
                Tensor::matrix(rows, width, data)?
            }
            Op::Slice { x, start, end } => {
                let x = self.val(*x);
                if start >= end || *end > x.cols() {
                    return Err(shape_err(format!(
                        "columns {start}..{end} out of width {}",
                        x.cols()
                    )));
                }
                let mut data = Vec::with_capacity(x.rows() * (end - start));
                for r in 0..x.rows() {
                    data.extend_from_slice(&x.row_slice(r)[*start..*end]);
                }
                Tensor::matrix(x.rows(), end - start, data)?
            }
        };
        Ok(out)
    }

    // ---- differentiation ----------------------------------------------------

    /// Gradients of the scalar `loss` with respect to every parameter.
    /// Parameters that do not reach `loss` get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let node_grads = self.backward_nodes(loss)?;
        Ok(self
            .param_nodes
            .iter()
            .map(|(name, &id)| {
                let g = node_grads
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros_like(&self.params[name]));
                (name.clone(), g)
            })
            .collect())
    }

    /// Gradient of `loss` with respect to a named input.
    pub fn input_gradient(&self, loss: NodeId, input: &str) -> Result<Tensor> {
        let id = *self
            .inputs
            .get(input)
            .ok_or_else(|| Error::Unbound(input.to_string()))?;
        let grads = self.backward_nodes(loss)?;
        match grads.get(id) {
            Some(g) => Ok(g.clone()),
            None => Ok(Tensor::zeros_like(self.value(id)?)),
        }
    }

    /// Reverse sweep over the cached forward values.
    pub fn backward_nodes(&self, loss: NodeId) -> Result<NodeGradients> {
        let lv = self.value(loss)?;
        if lv.len() != 1 {
            return Err(Error::NotScalar {
                node: loss.0,
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &dy, &mut grads)?;
            grads[idx] = Some(dy);
        }
        Ok(NodeGradients { grads })
    }

    fn propagate(&self, idx: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let y = node.value.as_ref().ok_or(Error::NotEvaluated(idx))?;
        match &node.op {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) | Op::Sample { .. } => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let mut da = Tensor::zeros(av.rows(), av.cols());
                gemm(
                    dy.data(),
                    dy.rows(),
                    dy.cols(),
                    false,
                    bv.data(),
                    bv.rows(),
                    bv.cols(),
                    true,
                    da.data_mut(),
                );
                let mut db = Tensor::zeros(bv.rows(), bv.cols());
                gemm(
                    av.data(),
                    av.rows(),
                    av.cols(),
                    true,
                    dy.data(),
                    dy.rows(),
                    dy.cols(),
                    false,
                    db.data_mut(),
                );
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MulRow(x, row) => {
                let (xv, rv) = (self.val(*x), self.val(*row));
                let c = dy.cols();
                let mut dr = vec![0.0; c];
                let mut dx = dy.clone();
                for (dline, xline) in dx.data_mut().chunks_mut(c).zip(xv.data().chunks(c)) {
                    for k in 0..c {
                        dr[k] += dline[k] * xline[k];
                        dline[k] *= rv.data()[k];
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *row, Tensor::matrix(1, c, dr)?);
            }
            Op::AddRow(x, bias) => {
                let c = dy.cols();
                let mut db = vec![0.0; c];
                for row in dy.data().chunks(c) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                accumulate(grads, *x, dy.clone());
                accumulate(grads, *bias, Tensor::matrix(1, c, db)?);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *b, dy.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                accumulate(grads, *a, zip_map(dy, bv, |g, v| g * v));
                accumulate(grads, *b, zip_map(dy, av, |g, v| g * v));
            }
            Op::Affine { x, scale, .. } => {
                accumulate(grads, *x, dy.map(|g| g * scale));
            }
            Op::Relu(x) => {
                let xv = self.val(*x);
                accumulate(
                    grads,
                    *x,
                    zip_map(dy, xv, |g, v| if v > 0.0 { g } else { 0.0 }),
                );
            }
            Op::Sigmoid(x) => {
                accumulate(grads, *x, zip_map(dy, y, |g, s| g * s * (1.0 - s)));
            }
            Op::Exp(x) => {
                accumulate(grads, *x, zip_map(dy, y, |g, e| g * e));
            }
            Op::Log(x) => {
                let xv = self.val(*x);
                accumulate(
                    grads,
                    *x,
                    zip_map(dy, xv, |g, v| {
                        if (LOG_CLAMP_MIN..=LOG_CLAMP_MAX).contains(&v) {
                            g / v
                        } else {
                            0.0
                        }
                    }),
                );
            }
            Op::Square(x) => {
                let xv = self.val(*x);
                accumulate(grads, *x, zip_map(dy, xv, |g, v| 2.0 * g * v));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.val(*x);
                accumulate(
                    grads,
                    *x,
                    zip_map(dy, xv, |g, v| if v >= *lo && v <= *hi { g } else { 0.0 }),
                );
            }
            Op::SoftmaxBlocks { x, blocks } => {
                let c = dy.cols();
                let mut dx = dy.clone();
                for (r, row) in dx.data_mut().chunks_mut(c).enumerate() {
                    let yr = y.row_slice(r);
                    let gr = dy.row_slice(r);
                    for &(s, e) in blocks {
                        let dot: f64 = (s..e).map(|k| gr[k] * yr[k]).sum();
                        for k in s..e {
                            row[k] = yr[k] * (gr[k] - dot);
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Sum(x) | Op::Mean(x) | Op::BatchMean(x) => {
                let xv = self.val(*x);
                let scale = match &node.op {
                    Op::Sum(_) => 1.0,
                    Op::Mean(_) => 1.0 / xv.len() as f64,
                    _ => 1.0 / xv.rows() as f64,
                };
                let g = dy.item() * scale;
                accumulate(grads, *x, xv.map(|_| g));
            }
            Op::Concat(xs) => {
                let mut offset = 0;
                for &part in xs {
                    let w = self.val(part).cols();
                    accumulate(grads, part, column_slice(dy, offset, offset + w)?);
                    offset += w;
                }
            }
            Op::Slice { x, start, end } => {
                let xv = self.val(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                let w = end - start;
                for r in 0..xv.rows() {
                    dx.row_slice_mut(r)[*start..*end].copy_from_slice(&dy.row_slice(r)[..w]);
                }
                accumulate(grads, *x, dx);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes already validated")
}

fn column_slice(t: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(t.rows() * (end - start));
    for r in 0..t.rows() {
        data.extend_from_slice(&t.row_slice(r)[start..end]);
    }
    Tensor::matrix(t.rows(), end - start, data)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in xs.iter_mut() {
        *v /= total;
    }
}
