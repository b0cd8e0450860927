//! Graph construction for networks, parameter-gradient flattening, input
//! gradients, and the gradient/Lipschitz penalty with two backends.

use super::{Activation, MlpSpec, Params};
use crate::autodiff::{central_gradient, GradientMap, Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Node ids of one network's parameter leaves inside a graph.
#[derive(Debug, Clone)]
pub struct NetLeaves {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

/// Pushes one leaf per layer tensor. `trainable` selects Param leaves
/// (tracked by gradients) versus Const leaves (frozen network).
pub fn param_leaves<S: Scalar>(
    g: &mut Graph<S>,
    params: &Params<S>,
    trainable: bool,
) -> Result<NetLeaves> {
    let mut weights = Vec::with_capacity(params.layer_count());
    let mut biases = Vec::with_capacity(params.layer_count());
    for layer in 0..params.layer_count() {
        let w = params.weight(layer);
        let b = params.bias(layer);
        let (wn, bn) = if trainable {
            (g.param(w)?, g.param(b)?)
        } else {
            (g.constant(w)?, g.constant(b)?)
        };
        weights.push(wn);
        biases.push(bn);
    }
    Ok(NetLeaves { weights, biases })
}

/// Builds the network ops on existing leaves: `x · W_l + b_l` with the hidden
/// activation between layers and a linear output layer.
pub fn graph_forward<S: Scalar>(
    g: &mut Graph<S>,
    spec: &MlpSpec,
    leaves: &NetLeaves,
    x: NodeId,
) -> Result<NodeId> {
    if g.value(x).cols() != spec.input_width() {
        return Err(Error::ShapeMismatch {
            op: "graph_forward",
            lhs: g.value(x).shape(),
            rhs: (g.value(x).rows(), spec.input_width()),
        });
    }
    let last = leaves.weights.len() - 1;
    let mut h = x;
    for l in 0..leaves.weights.len() {
        let z = g.matmul(h, leaves.weights[l])?;
        let z = g.add_bias(z, leaves.biases[l])?;
        h = if l == last {
            z
        } else {
            match spec.hidden {
                Activation::LeakyRelu(alpha) => g.leaky_relu(z, S::of(alpha))?,
                Activation::Tanh => g.tanh(z)?,
            }
        };
    }
    Ok(h)
}

/// Flattens a [`GradientMap`] into a vector aligned with `params.values()`.
/// Leaves missing from the map contribute zeros.
pub fn flatten_param_grads<S: Scalar>(
    params: &Params<S>,
    leaves: &NetLeaves,
    grads: &GradientMap<S>,
) -> Vec<S> {
    let mut flat = vec![S::zero(); params.len()];
    for (layer, l) in params.layout().iter().enumerate() {
        if let Some(gw) = grads.get(leaves.weights[layer]) {
            flat[l.w_offset..l.w_offset + l.fan_in * l.fan_out].copy_from_slice(gw.data());
        }
        if let Some(gb) = grads.get(leaves.biases[layer]) {
            flat[l.b_offset..l.b_offset + l.fan_out].copy_from_slice(gb.data());
        }
    }
    flat
}

fn require_scalar_output<S: Scalar>(net: &Params<S>) -> Result<()> {
    if net.spec().output_width() != 1 {
        return Err(Error::NonScalar {
            op: "input_gradient",
            shape: (1, net.spec().output_width()),
        });
    }
    Ok(())
}

/// Gradient of a scalar-output network with respect to a batch of inputs:
/// returns `[m, d]` whose row `i` is `∇_x phi(x_i)`.
pub fn input_gradients<S: Scalar>(net: &Params<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    require_scalar_output(net)?;
    let mut g = Graph::new();
    let xn = g.input(x.clone())?;
    let leaves = param_leaves(&mut g, net, false)?;
    let out = graph_forward(&mut g, net.spec(), &leaves, xn)?;
    // Rows are independent, so d(sum)/dx stacks the per-row gradients.
    let total = g.sum(out)?;
    let grads = g.backward(total)?;
    Ok(grads
        .get(xn)
        .cloned()
        .expect("input leaf always has a gradient entry"))
}

/// Gradient of a scalar-output network at a single point (length-d slice).
pub fn input_gradient<S: Scalar>(net: &Params<S>, x: &[S]) -> Result<Vec<S>> {
    let t = Tensor::new(1, x.len(), x.to_vec())?;
    Ok(input_gradients(net, &t)?.data().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyVariant {
    /// Two-sided: mean((‖∇phi(x)‖ − 1)²).
    Gp,
    /// One-sided: mean(max(0, ‖∇phi(x)‖ − 1)²).
    Lp,
}

impl PenaltyVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyVariant::Gp => "gp",
            PenaltyVariant::Lp => "lp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyBackend {
    /// Differentiates through the input-gradient computation (second order).
    Exact,
    /// Central finite differences over parameters on the penalty scalar.
    FiniteDiff,
}

#[derive(Debug, Clone)]
pub struct PenaltyGradient<S> {
    pub value: S,
    /// Parameter gradient aligned with `Params::values()`.
    pub grad: Vec<S>,
    /// Samples whose input-gradient norm was exactly zero (gradient taken as
    /// zero by convention).
    pub zero_norm_events: u64,
}

/// Emits penalty nodes on top of an input-gradient node `gx` (`[m, d]`).
/// Returns the scalar penalty node for `lambda·mean(f(‖gx_i‖ − 1))`.
pub fn penalty_nodes<S: Scalar>(
    g: &mut Graph<S>,
    gx: NodeId,
    variant: PenaltyVariant,
    lambda: S,
) -> Result<NodeId> {
    let rows = g.value(gx).rows();
    let norms = g.row_norm(gx)?;
    let ones = g.constant(Tensor::filled(rows, 1, S::one()))?;
    let excess = g.subtract(norms, ones)?;
    let clipped = match variant {
        PenaltyVariant::Gp => excess,
        // max(0, ·) as leaky_relu with slope 0.
        PenaltyVariant::Lp => g.leaky_relu(excess, S::zero())?,
    };
    let sq = g.square(clipped)?;
    let mean = g.mean(sq)?;
    g.scale(mean, lambda)
}

/// Penalty value for frozen parameters (no parameter gradient). Used by the
/// finite-difference backend and by reporting.
pub fn penalty_value<S: Scalar>(
    net: &Params<S>,
    x_hat: &Tensor<S>,
    variant: PenaltyVariant,
    lambda: S,
) -> Result<(S, u64)> {
    require_scalar_output(net)?;
    let gx = input_gradients(net, x_hat)?;
    let mut value = S::zero();
    let mut zero_events = 0u64;
    for i in 0..gx.rows() {
        let norm: S = gx.row(i).iter().map(|&v| v * v).sum::<S>().sqrt();
        if norm == S::zero() {
            zero_events += 1;
        }
        let excess = norm - S::one();
        let term = match variant {
            PenaltyVariant::Gp => excess * excess,
            PenaltyVariant::Lp => {
                let e = excess.max(S::zero());
                e * e
            }
        };
        value += term;
    }
    value = lambda * value / S::of(gx.rows() as f64);
    Ok((value, zero_events))
}

/// Parameter gradient of the penalty `lambda·mean(f(‖∇_x phi(x̂_i)‖ − 1))`.
///
/// The `Exact` backend emits the input-gradient computation symbolically and
/// backpropagates through it; `FiniteDiff` perturbs each parameter centrally.
pub fn penalty_gradient<S: Scalar>(
    net: &Params<S>,
    x_hat: &Tensor<S>,
    variant: PenaltyVariant,
    lambda: S,
    backend: PenaltyBackend,
) -> Result<PenaltyGradient<S>> {
    require_scalar_output(net)?;
    match backend {
        PenaltyBackend::Exact => {
            let mut g = Graph::new();
            let xn = g.input(x_hat.clone())?;
            let leaves = param_leaves(&mut g, net, true)?;
            let out = graph_forward(&mut g, net.spec(), &leaves, xn)?;
            let total = g.sum(out)?;
            let adjoints = g.backward_symbolic(total)?;
            let gx = adjoints[&xn.0];
            let pen = penalty_nodes(&mut g, gx, variant, lambda)?;
            let grads = g.backward(pen)?;
            Ok(PenaltyGradient {
                value: g.value(pen).scalar_value()?,
                grad: flatten_param_grads(net, &leaves, &grads),
                zero_norm_events: g.zero_norm_events(),
            })
        }
        PenaltyBackend::FiniteDiff => {
            let (value, zero_norm_events) = penalty_value(net, x_hat, variant, lambda)?;
            let spec = net.spec().clone();
            let grad = central_gradient(net.values(), crate::autodiff::DEFAULT_STEP, |theta| {
                let p = Params::from_flat(spec.clone(), theta.to_vec())?;
                Ok(penalty_value(&p, x_hat, variant, lambda)?.0)
            })?;
            Ok(PenaltyGradient {
                value,
                grad,
                zero_norm_events,
            })
        }
    }
}
