//! Feed-forward networks: architecture specs, flat parameter storage,
//! initialization, forward evaluation, graph building, gradients, Adam, and
//! checkpoints.

mod adam;
mod checkpoint;
mod grad;

pub use adam::{sgd_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS_HAT};
pub use checkpoint::{checkpoint_load, checkpoint_load_expecting, checkpoint_save};
pub use grad::{
    flatten_param_grads, graph_forward, input_gradient, input_gradients, param_leaves,
    penalty_gradient, penalty_value, NetLeaves, PenaltyBackend, PenaltyGradient, PenaltyVariant,
};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Network architecture: layer widths (input, hidden…, output) and the hidden
/// activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid(
                "network spec needs at least input and output widths",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(MlpSpec { widths, hidden })
    }

    /// `input -> hidden^depth (all `width` wide) -> output`.
    pub fn uniform(input: usize, width: usize, depth: usize, output: usize, hidden: Activation) -> Result<Self> {
        let mut widths = Vec::with_capacity(depth + 2);
        widths.push(input);
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(output);
        MlpSpec::new(widths, hidden)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// Total parameter count: Σ (in·out + out) over layers.
    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Offsets of one layer's weight block and bias block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub w_offset: usize,
    pub b_offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Flat parameter vector plus its layout table. Weights are stored row-major
/// as `[fan_in, fan_out]`, so a layer computes `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<S> {
    spec: MlpSpec,
    values: Vec<S>,
    layout: Vec<LayerLayout>,
}

fn build_layout(spec: &MlpSpec) -> Vec<LayerLayout> {
    let mut layout = Vec::with_capacity(spec.layer_count());
    let mut offset = 0;
    for w in spec.widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        layout.push(LayerLayout {
            w_offset: offset,
            b_offset: offset + fan_in * fan_out,
            fan_in,
            fan_out,
        });
        offset += fan_in * fan_out + fan_out;
    }
    layout
}

impl<S: Scalar> Params<S> {
    /// Deterministic initialization: He-style `N(0, 2/fan_in)` weights for
    /// leaky-relu specs, Xavier `N(0, 2/(fan_in+fan_out))` for tanh; biases
    /// zero.
    pub fn init(spec: MlpSpec, seed: u64) -> Params<S> {
        let layout = build_layout(&spec);
        let mut values = vec![S::zero(); spec.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &layout {
            let variance = match spec.hidden {
                Activation::LeakyRelu(_) => 2.0 / layer.fan_in as f64,
                Activation::Tanh => 2.0 / (layer.fan_in + layer.fan_out) as f64,
            };
            let normal = Normal::new(0.0, variance.sqrt()).expect("valid std");
            for i in 0..layer.fan_in * layer.fan_out {
                values[layer.w_offset + i] = S::of(normal.sample(&mut rng));
            }
            // Biases stay zero.
        }
        Params {
            spec,
            values,
            layout,
        }
    }

    /// All-zero parameters (useful for tests and hand-built nets).
    pub fn zeros(spec: MlpSpec) -> Params<S> {
        let layout = build_layout(&spec);
        let values = vec![S::zero(); spec.param_count()];
        Params {
            spec,
            values,
            layout,
        }
    }

    pub fn from_flat(spec: MlpSpec, values: Vec<S>) -> Result<Params<S>> {
        if values.len() != spec.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters for spec {:?}, got {}",
                spec.param_count(),
                spec.widths,
                values.len()
            )));
        }
        let layout = build_layout(&spec);
        Ok(Params {
            spec,
            values,
            layout,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Layer weight matrix as a `[fan_in, fan_out]` tensor (copied).
    pub fn weight(&self, layer: usize) -> Tensor<S> {
        let l = self.layout[layer];
        Tensor::new(
            l.fan_in,
            l.fan_out,
            self.values[l.w_offset..l.w_offset + l.fan_in * l.fan_out].to_vec(),
        )
        .expect("layout is consistent")
    }

    /// Layer bias as a `[1, fan_out]` tensor (copied).
    pub fn bias(&self, layer: usize) -> Tensor<S> {
        let l = self.layout[layer];
        Tensor::new(
            1,
            l.fan_out,
            self.values[l.b_offset..l.b_offset + l.fan_out].to_vec(),
        )
        .expect("layout is consistent")
    }

    pub fn set_weight(&mut self, layer: usize, w: &Tensor<S>) -> Result<()> {
        let l = self.layout[layer];
        if w.shape() != (l.fan_in, l.fan_out) {
            return Err(Error::ShapeMismatch {
                op: "set_weight",
                lhs: w.shape(),
                rhs: (l.fan_in, l.fan_out),
            });
        }
        self.values[l.w_offset..l.w_offset + l.fan_in * l.fan_out].copy_from_slice(w.data());
        Ok(())
    }

    pub fn set_bias(&mut self, layer: usize, b: &Tensor<S>) -> Result<()> {
        let l = self.layout[layer];
        if b.shape() != (1, l.fan_out) {
            return Err(Error::ShapeMismatch {
                op: "set_bias",
                lhs: b.shape(),
                rhs: (1, l.fan_out),
            });
        }
        self.values[l.b_offset..l.b_offset + l.fan_out].copy_from_slice(b.data());
        Ok(())
    }

    /// Clamp every parameter into `[-c, c]` (weight clipping).
    pub fn clip_in_place(&mut self, c: S) {
        for v in &mut self.values {
            *v = v.min(c).max(-c);
        }
    }

    /// Batched forward pass without graph construction. `x` is `[batch, d_in]`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.cols() != self.spec.input_width() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: x.shape(),
                rhs: (x.rows(), self.spec.input_width()),
            });
        }
        let last = self.layer_count() - 1;
        let mut h = x.clone();
        for (idx, l) in self.layout.iter().enumerate() {
            let w = Tensor::new(
                l.fan_in,
                l.fan_out,
                self.values[l.w_offset..l.w_offset + l.fan_in * l.fan_out].to_vec(),
            )?;
            let mut out = h.matmul(&w)?;
            let bias = &self.values[l.b_offset..l.b_offset + l.fan_out];
            for i in 0..out.rows() {
                for (o, &b) in out.row_mut(i).iter_mut().zip(bias) {
                    *o += b;
                }
            }
            if idx != last {
                match self.spec.hidden {
                    Activation::LeakyRelu(alpha) => {
                        let a = S::of(alpha);
                        out = out.map(|v| if v > S::zero() { v } else { a * v });
                    }
                    Activation::Tanh => out = out.map(|v| v.tanh()),
                }
            }
            if !out.all_finite() {
                return Err(Error::NonFinite { op: "forward" });
            }
            h = out;
        }
        Ok(h)
    }

    pub fn layer_count(&self) -> usize {
        self.layout.len()
    }

    /// Index of the layer owning flat position `i`.
    pub fn layer_of(&self, i: usize) -> usize {
        for (idx, l) in self.layout.iter().enumerate() {
            let end = l.b_offset + l.fan_out;
            if i < end {
                return idx;
            }
        }
        self.layout.len().saturating_sub(1)
    }

    /// Graph-free scalar-output evaluation: requires output width 1; returns
    /// the column of outputs for a batch.
    pub fn forward_scalar(&self, x: &Tensor<S>) -> Result<Vec<S>> {
        if self.spec.output_width() != 1 {
            return Err(Error::NonScalar {
                op: "forward_scalar",
                shape: (1, self.spec.output_width()),
            });
        }
        Ok(self.forward(x)?.data().to_vec())
    }
}

/// Builds the network in `g` on top of fresh leaves for `x`.
/// Convenience wrapper around [`param_leaves`] + [`graph_forward`].
pub fn forward_graph<S: Scalar>(
    g: &mut Graph<S>,
    params: &Params<S>,
    x: Tensor<S>,
    trainable: bool,
) -> Result<(crate::autodiff::NodeId, NetLeaves, crate::autodiff::NodeId)> {
    let xn = g.input(x)?;
    let leaves = param_leaves(g, params, trainable)?;
    let out = graph_forward(g, &params.spec, &leaves, xn)?;
    Ok((xn, leaves, out))
}
