//! Append-only computation graph with eager forward values.
//!
//! Reverse-mode differentiation comes in two forms:
//! - [`Graph::backward`] computes numeric adjoints for all `Param`/`Input`
//!   leaves of a scalar node.
//! - [`Graph::backward_symbolic`] emits the same reverse sweep *as new graph
//!   nodes*, so the resulting gradients are themselves differentiable. This is
//!   what lets gradient penalties (functions of an input gradient) be
//!   differentiated with respect to network parameters.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Network parameter; receives a gradient entry.
    Param,
    /// Data input; receives a gradient entry (needed for input gradients).
    Input,
    /// Constant; excluded from gradients.
    Const,
}

#[derive(Debug, Clone)]
pub enum Op<S> {
    Leaf(LeafKind),
    /// `a[m,k] · b[k,n]`.
    MatMul,
    /// `x[m,n] + broadcast(b[1,n])`.
    AddBias,
    /// Elementwise `x > 0 ? x : alpha·x`.
    LeakyRelu(S),
    Tanh,
    Square,
    Subtract,
    Scale(S),
    /// Sum of all entries, 1x1.
    Sum,
    /// Mean of all entries, 1x1.
    Mean,
    /// Euclidean norm of all entries, 1x1.
    Norm2,
    Add,
    /// Elementwise product.
    Mul,
    Transpose,
    /// Collapse the row dimension: `[m,n] -> [1,n]`.
    SumRows,
    /// Collapse the column dimension: `[m,n] -> [m,1]`.
    SumCols,
    /// Replicate a `[1,n]` row `m` times.
    BroadcastRows(usize),
    /// Replicate an `[m,1]` column `n` times.
    BroadcastCols(usize),
    /// Fill an `[m,n]` tensor with a 1x1 value.
    BroadcastScalar(usize, usize),
    /// Per-row Euclidean norm: `[m,n] -> [m,1]`.
    RowNorm,
    /// Elementwise `x != 0 ? 1/x : 0` (used for norm gradients).
    RecipOrZero,
    /// Elementwise derivative carrier of LeakyRelu: `x > 0 ? 1 : alpha`.
    /// Treated as locally constant (its own derivative is zero a.e.).
    LreluMask(S),
}

impl<S> Op<S> {
    pub fn tag(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::MatMul => "matmul",
            Op::AddBias => "add_bias",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Tanh => "tanh",
            Op::Square => "square",
            Op::Subtract => "subtract",
            Op::Scale(_) => "scale",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Norm2 => "norm2",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Transpose => "transpose",
            Op::SumRows => "sum_rows",
            Op::SumCols => "sum_cols",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::BroadcastCols(_) => "broadcast_cols",
            Op::BroadcastScalar(..) => "broadcast_scalar",
            Op::RowNorm => "row_norm",
            Op::RecipOrZero => "recip_or_zero",
            Op::LreluMask(_) => "lrelu_mask",
        }
    }
}

#[derive(Debug, Clone)]
struct Node<S> {
    op: Op<S>,
    inputs: Vec<NodeId>,
    value: Tensor<S>,
}

/// Gradients keyed by leaf node id; every `Param`/`Input` leaf at or below the
/// differentiated output gets an entry (zero tensors for unreachable leaves).
#[derive(Debug, Clone)]
pub struct GradientMap<S> {
    grads: BTreeMap<usize, Tensor<S>>,
}

impl<S: Scalar> GradientMap<S> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.grads.get(&id.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor<S>)> {
        self.grads.iter().map(|(&k, v)| (NodeId(k), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    /// Count of exact-zero norms seen by `Norm2`/`RowNorm` evaluations. Any
    /// gradient taken through such a norm is defined as zero by convention;
    /// the counter lets callers surface how often that happened.
    zero_norm_events: u64,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            zero_norm_events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn zero_norm_events(&self) -> u64 {
        self.zero_norm_events
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<S>, inputs: Vec<NodeId>, value: Tensor<S>) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op.tag() });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        Ok(id)
    }

    pub fn leaf(&mut self, kind: LeafKind, value: Tensor<S>) -> Result<NodeId> {
        self.push(Op::Leaf(kind), vec![], value)
    }

    pub fn param(&mut self, value: Tensor<S>) -> Result<NodeId> {
        self.leaf(LeafKind::Param, value)
    }

    pub fn input(&mut self, value: Tensor<S>) -> Result<NodeId> {
        self.leaf(LeafKind::Input, value)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Result<NodeId> {
        self.leaf(LeafKind::Const, value)
    }

    /// Applies `op` to existing nodes, computing the value eagerly.
    pub fn apply(&mut self, op: Op<S>, inputs: &[NodeId]) -> Result<NodeId> {
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::invalid(format!(
                    "{}: input node {} does not exist",
                    op.tag(),
                    id.0
                )));
            }
        }
        let (value, zero_events) = self.eval(&op, inputs)?;
        self.zero_norm_events += zero_events;
        self.push(op, inputs.to_vec(), value)
    }

    fn arity_error(op: &Op<S>, want: usize, got: usize) -> Error {
        Error::invalid(format!("{}: expects {want} inputs, got {got}", op.tag()))
    }

    fn input1(&self, op: &Op<S>, inputs: &[NodeId]) -> Result<&Tensor<S>> {
        if inputs.len() != 1 {
            return Err(Self::arity_error(op, 1, inputs.len()));
        }
        Ok(&self.nodes[inputs[0].0].value)
    }

    fn input2(&self, op: &Op<S>, inputs: &[NodeId]) -> Result<(&Tensor<S>, &Tensor<S>)> {
        if inputs.len() != 2 {
            return Err(Self::arity_error(op, 2, inputs.len()));
        }
        Ok((&self.nodes[inputs[0].0].value, &self.nodes[inputs[1].0].value))
    }

    /// Computes an op's value; the second element counts zero-norm events
    /// (RecipOrZero applied at the origin).
    fn eval(&self, op: &Op<S>, inputs: &[NodeId]) -> Result<(Tensor<S>, u64)> {

        // Norm ops count exact-zero norms: downstream gradients at the origin
        // are defined as zero, and the counter surfaces how often that
        // convention was exercised.
        match op {
            Op::Norm2 => {
                let x = self.input1(op, inputs)?;
                let norm = x.frobenius_norm();
                let zeros = (norm == S::zero()) as u64;
                return Ok((Tensor::scalar(norm), zeros));
            }
            Op::RowNorm => {
                let x = self.input1(op, inputs)?;
                let mut out = Tensor::zeros(x.rows(), 1);
                let mut zeros = 0u64;
                for i in 0..x.rows() {
                    let s: S = x.row(i).iter().map(|&v| v * v).sum();
                    let norm = s.sqrt();
                    if norm == S::zero() {
                        zeros += 1;
                    }
                    out.data_mut()[i] = norm;
                }
                return Ok((out, zeros));
            }
            Op::RecipOrZero => {
                let x = self.input1(op, inputs)?;
                let out = x.map(|v| {
                    if v == S::zero() {
                        S::zero()
                    } else {
                        S::one() / v
                    }
                });
                return Ok((out, 0));
            }
            _ => {}
        }

        let value: Result<Tensor<S>> = match op {
            Op::Leaf(_) => Err(Error::invalid("leaf nodes are created via Graph::leaf")),
            Op::MatMul => {
                let (a, b) = self.input2(op, inputs)?;
                a.matmul(b)
            }
            Op::AddBias => {
                let (x, b) = self.input2(op, inputs)?;
                if b.rows() != 1 || b.cols() != x.cols() {
                    return Err(Error::ShapeMismatch {
                        op: "add_bias",
                        lhs: x.shape(),
                        rhs: b.shape(),
                    });
                }
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, &bv) in out.row_mut(i).iter_mut().zip(b.data()) {
                        *o += bv;
                    }
                }
                Ok(out)
            }
            Op::LeakyRelu(alpha) => {
                let a = *alpha;
                Ok(self.input1(op, inputs)?.map(|v| if v > S::zero() { v } else { a * v }))
            }
            Op::Tanh => Ok(self.input1(op, inputs)?.map(|v| v.tanh())),
            Op::Square => Ok(self.input1(op, inputs)?.map(|v| v * v)),
            Op::Subtract => {
                let (a, b) = self.input2(op, inputs)?;
                a.zip_map(b, "subtract", |x, y| x - y)
            }
            Op::Scale(c) => {
                let c = *c;
                Ok(self.input1(op, inputs)?.map(|v| c * v))
            }
            Op::Sum => Ok(Tensor::scalar(self.input1(op, inputs)?.sum())),
            Op::Mean => {
                let x = self.input1(op, inputs)?;
                let n = S::of(x.len() as f64);
                Ok(Tensor::scalar(x.sum() / n))
            }
            Op::Norm2 => unreachable!("handled above"),
            Op::Add => {
                let (a, b) = self.input2(op, inputs)?;
                a.zip_map(b, "add", |x, y| x + y)
            }
            Op::Mul => {
                let (a, b) = self.input2(op, inputs)?;
                a.zip_map(b, "mul", |x, y| x * y)
            }
            Op::Transpose => Ok(self.input1(op, inputs)?.transpose()),
            Op::SumRows => {
                let x = self.input1(op, inputs)?;
                let mut out = Tensor::zeros(1, x.cols());
                for i in 0..x.rows() {
                    for (o, &v) in out.data_mut().iter_mut().zip(x.row(i)) {
                        *o += v;
                    }
                }
                Ok(out)
            }
            Op::SumCols => {
                let x = self.input1(op, inputs)?;
                let mut out = Tensor::zeros(x.rows(), 1);
                for i in 0..x.rows() {
                    out.data_mut()[i] = x.row(i).iter().copied().sum();
                }
                Ok(out)
            }
            Op::BroadcastRows(m) => {
                let m = *m;
                let x = self.input1(op, inputs)?;
                if x.rows() != 1 {
                    return Err(Error::ShapeMismatch {
                        op: "broadcast_rows",
                        lhs: x.shape(),
                        rhs: (1, x.cols()),
                    });
                }
                let mut out = Tensor::zeros(m, x.cols());
                for i in 0..m {
                    out.row_mut(i).copy_from_slice(x.data());
                }
                Ok(out)
            }
            Op::BroadcastCols(n) => {
                let n = *n;
                let x = self.input1(op, inputs)?;
                if x.cols() != 1 {
                    return Err(Error::ShapeMismatch {
                        op: "broadcast_cols",
                        lhs: x.shape(),
                        rhs: (x.rows(), 1),
                    });
                }
                let mut out = Tensor::zeros(x.rows(), n);
                for i in 0..x.rows() {
                    let v = x.data()[i];
                    out.row_mut(i).fill(v);
                }
                Ok(out)
            }
            Op::BroadcastScalar(m, n) => {
                let (m, n) = (*m, *n);
                let x = self.input1(op, inputs)?;
                let v = x.scalar_value().map_err(|_| Error::NonScalar {
                    op: "broadcast_scalar",
                    shape: x.shape(),
                })?;
                Ok(Tensor::filled(m, n, v))
            }
            Op::RowNorm | Op::RecipOrZero => unreachable!("handled above"),
            Op::LreluMask(alpha) => {
                let a = *alpha;
                Ok(self.input1(op, inputs)?.map(|v| if v > S::zero() { S::one() } else { a }))
            }
        };
        Ok((value?, 0))
    }

    // Convenience builders.

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::AddBias, &[x, b])
    }

    pub fn leaky_relu(&mut self, x: NodeId, alpha: S) -> Result<NodeId> {
        self.apply(Op::LeakyRelu(alpha), &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Tanh, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Square, &[x])
    }

    pub fn subtract(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Subtract, &[a, b])
    }

    pub fn scale(&mut self, x: NodeId, c: S) -> Result<NodeId> {
        self.apply(Op::Scale(c), &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean, &[x])
    }

    pub fn norm2(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Norm2, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Transpose, &[x])
    }

    pub fn row_norm(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::RowNorm, &[x])
    }

    fn check_scalar_output(&self, output: NodeId, op: &'static str) -> Result<()> {
        let v = &self.nodes[output.0].value;
        if !v.is_scalar() {
            return Err(Error::NonScalar {
                op,
                shape: v.shape(),
            });
        }
        Ok(())
    }

    /// Numeric reverse sweep from a scalar node.
    pub fn backward(&self, output: NodeId) -> Result<GradientMap<S>> {
        self.check_scalar_output(output, "backward")?;

        let mut adjoints: Vec<Option<Tensor<S>>> = vec![None; output.0 + 1];
        adjoints[output.0] = Some(Tensor::scalar(S::one()));

        for id in (0..=output.0).rev() {
            let Some(g) = adjoints[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match node.op {
                Op::Leaf(_) => {
                    adjoints[id] = Some(g);
                    continue;
                }
                _ => {
                    self.accumulate_vjp(id, &g, &mut adjoints)?;
                }
            }
        }

        let mut grads = BTreeMap::new();
        let reachable = self.nodes.iter().zip(adjoints.iter_mut()).enumerate();
        for (id, (node, slot)) in reachable.take(output.0 + 1) {
            if let Op::Leaf(kind) = node.op {
                if matches!(kind, LeafKind::Param | LeafKind::Input) {
                    let shape = node.value.shape();
                    let t = slot
                        .take()
                        .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1));
                    grads.insert(id, t);
                }
            }
        }
        Ok(GradientMap { grads })
    }

    /// Numeric vector-Jacobian product for node `id` with upstream adjoint `g`,
    /// accumulated into `adjoints`.
    fn accumulate_vjp(
        &self,
        id: usize,
        g: &Tensor<S>,
        adjoints: &mut [Option<Tensor<S>>],
    ) -> Result<()> {
        let node = &self.nodes[id];
        let input_val = |k: usize| &self.nodes[node.inputs[k].0].value;
        let acc = |k: usize, t: Tensor<S>, adjoints: &mut [Option<Tensor<S>>]| -> Result<()> {
            let slot = &mut adjoints[node.inputs[k].0];
            match slot {
                Some(existing) => existing.add_assign(&t)?,
                None => *slot = Some(t),
            }
            Ok(())
        };

        match &node.op {
            Op::Leaf(_) => {}
            Op::MatMul => {
                let (a, b) = (input_val(0), input_val(1));
                acc(0, g.matmul(&b.transpose())?, adjoints)?;
                acc(1, a.transpose().matmul(g)?, adjoints)?;
            }
            Op::AddBias => {
                acc(0, g.clone(), adjoints)?;
                let mut bg = Tensor::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (o, &v) in bg.data_mut().iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(1, bg, adjoints)?;
            }
            Op::LeakyRelu(alpha) => {
                let a = *alpha;
                let x = input_val(0);
                let t = g.zip_map(x, "leaky_relu_vjp", |gv, xv| {
                    if xv > S::zero() {
                        gv
                    } else {
                        a * gv
                    }
                })?;
                acc(0, t, adjoints)?;
            }
            Op::Tanh => {
                let y = &node.value;
                let t = g.zip_map(y, "tanh_vjp", |gv, yv| gv * (S::one() - yv * yv))?;
                acc(0, t, adjoints)?;
            }
            Op::Square => {
                let x = input_val(0);
                let two = S::of(2.0);
                let t = g.zip_map(x, "square_vjp", |gv, xv| gv * two * xv)?;
                acc(0, t, adjoints)?;
            }
            Op::Subtract => {
                acc(0, g.clone(), adjoints)?;
                acc(1, g.map(|v| -v), adjoints)?;
            }
            Op::Scale(c) => {
                let c = *c;
                acc(0, g.map(|v| c * v), adjoints)?;
            }
            Op::Sum => {
                let x = input_val(0);
                let gv = g.scalar_value()?;
                acc(0, Tensor::filled(x.rows(), x.cols(), gv), adjoints)?;
            }
            Op::Mean => {
                let x = input_val(0);
                let gv = g.scalar_value()? / S::of(x.len() as f64);
                acc(0, Tensor::filled(x.rows(), x.cols(), gv), adjoints)?;
            }
            Op::Norm2 => {
                let x = input_val(0);
                let norm = node.value.scalar_value()?;
                let gv = g.scalar_value()?;
                // Gradient of the norm at the origin is defined as zero.
                let factor = if norm == S::zero() {
                    S::zero()
                } else {
                    gv / norm
                };
                acc(0, x.map(|v| factor * v), adjoints)?;
            }
            Op::Add => {
                acc(0, g.clone(), adjoints)?;
                acc(1, g.clone(), adjoints)?;
            }
            Op::Mul => {
                let (a, b) = (input_val(0), input_val(1));
                acc(0, g.zip_map(b, "mul_vjp", |gv, bv| gv * bv)?, adjoints)?;
                acc(1, g.zip_map(a, "mul_vjp", |gv, av| gv * av)?, adjoints)?;
            }
            Op::Transpose => {
                acc(0, g.transpose(), adjoints)?;
            }
            Op::SumRows => {
                let x = input_val(0);
                let mut t = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    t.row_mut(i).copy_from_slice(g.data());
                }
                acc(0, t, adjoints)?;
            }
            Op::SumCols => {
                let x = input_val(0);
                let mut t = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let v = g.data()[i];
                    t.row_mut(i).fill(v);
                }
                acc(0, t, adjoints)?;
            }
            Op::BroadcastRows(_) => {
                let mut t = Tensor::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (o, &v) in t.data_mut().iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(0, t, adjoints)?;
            }
            Op::BroadcastCols(_) => {
                let mut t = Tensor::zeros(g.rows(), 1);
                for i in 0..g.rows() {
                    t.data_mut()[i] = g.row(i).iter().copied().sum();
                }
                acc(0, t, adjoints)?;
            }
            Op::BroadcastScalar(..) => {
                acc(0, Tensor::scalar(g.sum()), adjoints)?;
            }
            Op::RowNorm => {
                let x = input_val(0);
                let r = &node.value;
                let mut t = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let ri = r.data()[i];
                    if ri == S::zero() {
                        continue; // norm gradient at the origin: zero
                    }
                    let f = g.data()[i] / ri;
                    for (o, &xv) in t.row_mut(i).iter_mut().zip(x.row(i)) {
                        *o = f * xv;
                    }
                }
                acc(0, t, adjoints)?;
            }
            Op::RecipOrZero => {
                // d(1/x)/dx = -1/x^2 = -(value)^2; zero branch contributes zero.
                let y = &node.value;
                let t = g.zip_map(y, "recip_vjp", |gv, yv| -gv * yv * yv)?;
                acc(0, t, adjoints)?;
            }
            Op::LreluMask(_) => {
                // Derivative carrier: zero derivative almost everywhere.
            }
        }
        Ok(())
    }

    /// Reverse sweep emitted as graph nodes. Returns the adjoint node id for
    /// every node that received one (leaves included). The emitted adjoints are
    /// themselves differentiable by a later `backward` call.
    pub fn backward_symbolic(&mut self, output: NodeId) -> Result<BTreeMap<usize, NodeId>> {
        self.check_scalar_output(output, "backward_symbolic")?;

        let mut adjoint: BTreeMap<usize, NodeId> = BTreeMap::new();
        let seed = self.constant(Tensor::scalar(S::one()))?;
        adjoint.insert(output.0, seed);

        let accumulate =
            |graph: &mut Self, adjoint: &mut BTreeMap<usize, NodeId>, target: NodeId, g: NodeId| -> Result<()> {
                match adjoint.get(&target.0) {
                    Some(&existing) => {
                        let summed = graph.add(existing, g)?;
                        adjoint.insert(target.0, summed);
                    }
                    None => {
                        adjoint.insert(target.0, g);
                    }
                }
                Ok(())
            };

        for id in (0..=output.0).rev() {
            let Some(&g) = adjoint.get(&id) else {
                continue;
            };
            let op = self.nodes[id].op.clone();
            let inputs = self.nodes[id].inputs.clone();
            match op {
                Op::Leaf(_) => continue,
                Op::MatMul => {
                    let bt = self.transpose(inputs[1])?;
                    let ga = self.matmul(g, bt)?;
                    accumulate(self, &mut adjoint, inputs[0], ga)?;
                    let at = self.transpose(inputs[0])?;
                    let gb = self.matmul(at, g)?;
                    accumulate(self, &mut adjoint, inputs[1], gb)?;
                }
                Op::AddBias => {
                    accumulate(self, &mut adjoint, inputs[0], g)?;
                    let gb = self.apply(Op::SumRows, &[g])?;
                    accumulate(self, &mut adjoint, inputs[1], gb)?;
                }
                Op::LeakyRelu(alpha) => {
                    let mask = self.apply(Op::LreluMask(alpha), &[inputs[0]])?;
                    let gx = self.mul(g, mask)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Tanh => {
                    // d tanh = 1 - tanh^2, built from the forward value.
                    let y = NodeId(id);
                    let y2 = self.square(y)?;
                    let shape = self.value(y2).shape();
                    let ones = self.constant(Tensor::filled(shape.0, shape.1, S::one()))?;
                    let dy = self.subtract(ones, y2)?;
                    let gx = self.mul(g, dy)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Square => {
                    let two_x = self.scale(inputs[0], S::of(2.0))?;
                    let gx = self.mul(g, two_x)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Subtract => {
                    accumulate(self, &mut adjoint, inputs[0], g)?;
                    let neg = self.scale(g, -S::one())?;
                    accumulate(self, &mut adjoint, inputs[1], neg)?;
                }
                Op::Scale(c) => {
                    let gx = self.scale(g, c)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Sum => {
                    let shape = self.value(inputs[0]).shape();
                    let gx = self.apply(Op::BroadcastScalar(shape.0, shape.1), &[g])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Mean => {
                    let shape = self.value(inputs[0]).shape();
                    let n = S::of((shape.0 * shape.1) as f64);
                    let gs = self.scale(g, S::one() / n)?;
                    let gx = self.apply(Op::BroadcastScalar(shape.0, shape.1), &[gs])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Norm2 => {
                    let recip = self.apply(Op::RecipOrZero, &[NodeId(id)])?;
                    let f = self.mul(g, recip)?;
                    let shape = self.value(inputs[0]).shape();
                    let fb = self.apply(Op::BroadcastScalar(shape.0, shape.1), &[f])?;
                    let gx = self.mul(fb, inputs[0])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::Add => {
                    accumulate(self, &mut adjoint, inputs[0], g)?;
                    accumulate(self, &mut adjoint, inputs[1], g)?;
                }
                Op::Mul => {
                    let ga = self.mul(g, inputs[1])?;
                    accumulate(self, &mut adjoint, inputs[0], ga)?;
                    let gb = self.mul(g, inputs[0])?;
                    accumulate(self, &mut adjoint, inputs[1], gb)?;
                }
                Op::Transpose => {
                    let gx = self.transpose(g)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::SumRows => {
                    let m = self.value(inputs[0]).rows();
                    let gx = self.apply(Op::BroadcastRows(m), &[g])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::SumCols => {
                    let n = self.value(inputs[0]).cols();
                    let gx = self.apply(Op::BroadcastCols(n), &[g])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::BroadcastRows(_) => {
                    let gx = self.apply(Op::SumRows, &[g])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::BroadcastCols(_) => {
                    let gx = self.apply(Op::SumCols, &[g])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::BroadcastScalar(..) => {
                    let gx = self.sum(g)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::RowNorm => {
                    let recip = self.apply(Op::RecipOrZero, &[NodeId(id)])?;
                    let f = self.mul(g, recip)?;
                    let n = self.value(inputs[0]).cols();
                    let fb = self.apply(Op::BroadcastCols(n), &[f])?;
                    let gx = self.mul(fb, inputs[0])?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::RecipOrZero => {
                    let y2 = self.square(NodeId(id))?;
                    let neg = self.scale(y2, -S::one())?;
                    let gx = self.mul(g, neg)?;
                    accumulate(self, &mut adjoint, inputs[0], gx)?;
                }
                Op::LreluMask(_) => {
                    // Zero derivative almost everywhere: nothing to emit.
                }
            }
        }
        Ok(adjoint)
    }
}
