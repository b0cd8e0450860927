//! Critic training: learn the Kantorovich potential from the generated
//! distribution to the data distribution.
//!
//! The critic ascends `mean phi(gen) − mean phi(data)` (implemented as Adam
//! descent on its negation) under one of three Lipschitz controls: weight
//! clipping, a two-sided gradient penalty, or the one-sided variant. At the
//! ascent optimum over 1-Lipschitz functions the objective equals W1 between
//! the two distributions, and the critic's input gradients point along the
//! transport directions the flow consumes.

use crate::data::sample_measure_batch;
use crate::error::{Error, Result};
use crate::nn::{
    flatten_param_grads, graph_forward, param_leaves, penalty_gradient, penalty_value, AdamState,
    Params, PenaltyBackend, PenaltyVariant,
};
use crate::ot::DiscreteMeasure;
use crate::tensor::Tensor;
use crate::autodiff::Graph;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Lipschitz control used while training the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticVariant {
    /// Clamp every weight to `[−c, c]` after each step.
    Clip,
    /// Two-sided gradient penalty `λ·mean((‖∇phi(x̂)‖ − 1)²)`.
    Gp,
    /// One-sided penalty `λ·mean(max(0, ‖∇phi(x̂)‖ − 1)²)`.
    Lp,
}

impl CriticVariant {
    pub fn name(&self) -> &'static str {
        match self {
            CriticVariant::Clip => "clip",
            CriticVariant::Gp => "gp",
            CriticVariant::Lp => "lp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(CriticVariant::Clip),
            "gp" => Ok(CriticVariant::Gp),
            "lp" => Ok(CriticVariant::Lp),
            other => Err(Error::config(format!(
                "unknown critic variant {other:?} (expected clip, gp, or lp)"
            ))),
        }
    }

    /// Penalty shape for gp/lp; none for clip.
    pub fn penalty_variant(&self) -> Option<PenaltyVariant> {
        match self {
            CriticVariant::Clip => None,
            CriticVariant::Gp => Some(PenaltyVariant::Gp),
            CriticVariant::Lp => Some(PenaltyVariant::Lp),
        }
    }
}

/// Critic training hyperparameters for one epoch of `simulate_phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticConfig {
    pub variant: CriticVariant,
    /// Penalty weight (gp/lp).
    pub lambda: f64,
    /// Clip bound (clip).
    pub clip: f64,
    /// Critic steps per epoch.
    pub n_critic: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// When true, every critic step draws fresh latent and data minibatches;
    /// when false, one pair of minibatches is reused for all steps.
    pub fresh_batches: bool,
    /// Seed for this epoch's critic randomness (minibatch draws and
    /// interpolation coefficients).
    pub seed: u64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            variant: CriticVariant::Lp,
            lambda: 10.0,
            clip: 0.01,
            n_critic: 10,
            lr: 1e-4,
            fresh_batches: true,
            seed: 0,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config("critic.lambda must be finite and >= 0"));
        }
        if self.clip <= 0.0 || self.clip.is_nan() {
            return Err(Error::config("critic.clip must be > 0"));
        }
        if self.n_critic == 0 {
            return Err(Error::config("critic.n_critic must be >= 1"));
        }
        if self.lr <= 0.0 || self.lr.is_nan() {
            return Err(Error::config("critic.lr must be > 0"));
        }
        Ok(())
    }
}

/// `mean phi(gen) − mean phi(data)`. The critic ascends this; at the optimum
/// over 1-Lipschitz functions it equals `W1(gen, data)`.
pub fn critic_objective(
    phi: &Params<f64>,
    gen_batch: &Tensor<f64>,
    data_batch: &Tensor<f64>,
) -> Result<f64> {
    if phi.spec().output_width() != 1 {
        return Err(Error::invalid("critic must have scalar output"));
    }
    let mean_out = |batch: &Tensor<f64>| -> Result<f64> {
        let out = phi.forward(batch)?;
        Ok(out.data().iter().sum::<f64>() / out.rows() as f64)
    };
    Ok(mean_out(gen_batch)? - mean_out(data_batch)?)
}

/// Interpolates `x̂_i = t_i·x_i + (1−t_i)·y_i` pairing data row `x_i` with
/// generated row `y_i` by batch index, `t_i ~ U(0,1)`.
pub fn interpolate_pairs(
    data_batch: &Tensor<f64>,
    gen_batch: &Tensor<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f64>> {
    if data_batch.shape() != gen_batch.shape() {
        return Err(Error::ShapeMismatch {
            op: "interpolate_pairs",
            lhs: data_batch.shape(),
            rhs: gen_batch.shape(),
        });
    }
    let (m, d) = data_batch.shape();
    let mut out = Tensor::zeros(m, d);
    for i in 0..m {
        let t: f64 = rng.gen_range(0.0..1.0);
        for j in 0..d {
            out.set(i, j, t * data_batch.get(i, j) + (1.0 - t) * gen_batch.get(i, j));
        }
    }
    Ok(out)
}

/// Penalty term on interpolated points, deterministic under `seed`.
pub fn penalty_term(
    phi: &Params<f64>,
    gen_batch: &Tensor<f64>,
    data_batch: &Tensor<f64>,
    variant: PenaltyVariant,
    lambda: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_hat = interpolate_pairs(data_batch, gen_batch, &mut rng)?;
    Ok(penalty_value(phi, &x_hat, variant, lambda)?.0)
}

/// What one epoch of critic training observed.
#[derive(Debug, Clone, Copy)]
pub struct CriticReport {
    /// Objective on the first step's minibatches, before any update.
    pub objective_before: f64,
    /// Objective on the last step's minibatches, after the final update.
    pub objective_after: f64,
    /// Penalty value at the last step (0 for the clip variant).
    pub penalty: f64,
    /// Interpolated points whose critic gradient had exactly zero norm.
    pub zero_norm_events: u64,
}

/// Gradient of `−objective` with respect to the critic parameters.
fn objective_descent_gradient(
    phi: &Params<f64>,
    gen_batch: &Tensor<f64>,
    data_batch: &Tensor<f64>,
) -> Result<Vec<f64>> {
    let mut g: Graph<f64> = Graph::new();
    let leaves = param_leaves(&mut g, phi, true)?;
    let gen_in = g.constant(gen_batch.clone())?;
    let data_in = g.constant(data_batch.clone())?;
    let out_gen = graph_forward(&mut g, phi.spec(), &leaves, gen_in)?;
    let out_data = graph_forward(&mut g, phi.spec(), &leaves, data_in)?;
    let mean_gen = g.mean(out_gen)?;
    let mean_data = g.mean(out_data)?;
    let obj = g.subtract(mean_gen, mean_data)?;
    let loss = g.scale(obj, -1.0)?;
    let grads = g.backward(loss)?;
    Ok(flatten_param_grads(phi, &leaves, &grads))
}

/// One critic update on the given minibatches. Returns the (pre-update)
/// objective, the penalty value, and zero-gradient-norm event count.
fn critic_step(
    phi: &mut Params<f64>,
    adam: &mut AdamState<f64>,
    config: &CriticConfig,
    gen_batch: &Tensor<f64>,
    data_batch: &Tensor<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, u64)> {
    let objective = critic_objective(phi, gen_batch, data_batch)?;
    let mut grads = objective_descent_gradient(phi, gen_batch, data_batch)?;
    let mut penalty = 0.0;
    let mut zero_events = 0;
    if let Some(variant) = config.variant.penalty_variant() {
        let x_hat = interpolate_pairs(data_batch, gen_batch, rng)?;
        let pg = penalty_gradient(phi, &x_hat, variant, config.lambda, PenaltyBackend::Exact)?;
        penalty = pg.value;
        zero_events = pg.zero_norm_events;
        for (g, p) in grads.iter_mut().zip(&pg.grad) {
            *g += p;
        }
    }
    adam.step(phi, &grads)?;
    if config.variant == CriticVariant::Clip {
        phi.clip_in_place(config.clip);
    }
    Ok((objective, penalty, zero_events))
}

/// Trains the critic for `n_critic` steps against minibatch providers.
/// `gen_batches` yields generated batches; `data` supplies data minibatches
/// sized to match. Used by both the generator loop (batches = `G(z)`) and the
/// particle loop (batches = the cloud itself).
pub fn train_critic(
    phi: &mut Params<f64>,
    adam: &mut AdamState<f64>,
    config: &CriticConfig,
    data: &DiscreteMeasure,
    gen_batches: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<Tensor<f64>>,
) -> Result<CriticReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut objective_before = 0.0;
    let mut objective = 0.0;
    let mut penalty = 0.0;
    let mut zero_events = 0u64;
    let mut held: Option<(Tensor<f64>, Tensor<f64>)> = None;
    let mut gen_batch;
    let mut data_batch;
    for step in 0..config.n_critic {
        match (&held, config.fresh_batches) {
            (Some((g, d)), false) => {
                gen_batch = g.clone();
                data_batch = d.clone();
            }
            _ => {
                gen_batch = gen_batches(&mut rng)?;
                data_batch = sample_measure_batch(data, gen_batch.rows(), &mut rng)?;
                if !config.fresh_batches {
                    held = Some((gen_batch.clone(), data_batch.clone()));
                }
            }
        }
        let (obj, pen, zeros) = critic_step(phi, adam, config, &gen_batch, &data_batch, &mut rng)?;
        if step == 0 {
            objective_before = obj;
        }
        penalty = pen;
        zero_events += zeros;
        if step + 1 == config.n_critic {
            objective = critic_objective(phi, &gen_batch, &data_batch)?;
        }
    }
    Ok(CriticReport {
        objective_before,
        objective_after: objective,
        penalty,
        zero_norm_events: zero_events,
    })
}

/// One epoch of critic training against a generator: `n_critic` ascent steps
/// on `mean phi(G(z)) − mean phi(data)` (minus penalty for gp/lp; weights
/// clipped after each step for clip). `phi` and `adam` persist across epochs
/// (warm start); `prior` yields one latent batch per call. Deterministic
/// under `config.seed`.
pub fn simulate_phi(
    gen: &Params<f64>,
    data: &DiscreteMeasure,
    prior: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<Tensor<f64>>,
    config: &CriticConfig,
    phi: &mut Params<f64>,
    adam: &mut AdamState<f64>,
) -> Result<CriticReport> {
    let mut gen_batches = |rng: &mut ChaCha8Rng| -> Result<Tensor<f64>> {
        let z = prior(rng)?;
        gen.forward(&z)
    };
    train_critic(phi, adam, config, data, &mut gen_batches)
}
