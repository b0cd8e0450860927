//! Training loops and particle flows.
//!
//! One training epoch advances the generated distribution by a single
//! explicit Euler step of a Wasserstein-1 gradient flow: the critic is
//! trained toward the transport potential of the current generated cloud,
//! each generated sample receives a target `zeta_i = y_i - eps*grad(phi)(y_i)`,
//! and the generator regresses onto those targets for `K` consecutive
//! descent steps with the minibatch frozen ("persistency"). The module also
//! houses the WGAN baselines that share the same critic, a generator-free
//! particle mode that moves a cloud directly along the potential's gradient,
//! and a numerical check that the `K = 1` loop under SGD reproduces a WGAN
//! update at learning rate `2*gamma_g*eps`.

use crate::autodiff::Graph;
use crate::data::{lane_rng, lane_seed, lanes, prior_sample_with, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, MetricsWriter};
use crate::nn::{
    checkpoint_save, flatten_param_grads, graph_forward, input_gradients, param_leaves,
    sgd_step, Activation, AdamState, MlpSpec, Params,
};
use crate::ot::{kantorovich_potential_1d, w1_exact, DiscreteMeasure};
use crate::potential::{critic_objective, simulate_phi, train_critic, CriticConfig};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Leaky slope used for every network the runner builds. The benchmark
/// nets are otherwise fully determined by config (widths and depth).
pub const HIDDEN_ALPHA: f64 = 0.2;

/// Metric batches are capped at this many samples per side so the exact
/// transport solve stays cheap even for large training batches.
pub const METRIC_CAP: usize = 512;

/// Which loop [`run_experiment`] drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// Euler-target regression with persistency `K`.
    W1fe,
    /// Plain WGAN generator update (one step per epoch; `K` forced to 1).
    Wgan,
    /// WGAN update repeated `K` times on the same minibatch with the critic
    /// frozen.
    WganPersistent,
    /// Generator-free cloud transport; handled by [`particle_flow_run`], not
    /// the training loop.
    Particle,
}

impl FlowMode {
    pub fn name(&self) -> &'static str {
        match self {
            FlowMode::W1fe => "w1fe",
            FlowMode::Wgan => "wgan",
            FlowMode::WganPersistent => "wgan_persistent",
            FlowMode::Particle => "particle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "w1fe" => Ok(FlowMode::W1fe),
            "wgan" => Ok(FlowMode::Wgan),
            "wgan_persistent" => Ok(FlowMode::WganPersistent),
            "particle" => Ok(FlowMode::Particle),
            other => Err(Error::config(format!(
                "unknown mode '{other}' (expected w1fe, wgan, wgan_persistent, or particle)"
            ))),
        }
    }
}

/// Generator optimizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenOptimizer {
    Sgd,
    Adam,
}

impl GenOptimizer {
    pub fn name(&self) -> &'static str {
        match self {
            GenOptimizer::Sgd => "sgd",
            GenOptimizer::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(GenOptimizer::Sgd),
            "adam" => Ok(GenOptimizer::Adam),
            other => Err(Error::config(format!(
                "unknown optimizer '{other}' (expected sgd or adam)"
            ))),
        }
    }
}

/// Runtime optimizer for the generator. SGD carries no state; Adam keeps
/// moments across epochs.
#[derive(Debug, Clone)]
pub enum GenOpt {
    Sgd,
    Adam(AdamState<f64>),
}

impl GenOpt {
    pub fn new(kind: GenOptimizer, param_count: usize, lr: f64) -> GenOpt {
        match kind {
            GenOptimizer::Sgd => GenOpt::Sgd,
            GenOptimizer::Adam => GenOpt::Adam(AdamState::new(param_count, lr)),
        }
    }

    /// One descent step at the given learning rate.
    pub fn step(&mut self, params: &mut Params<f64>, grads: &[f64], lr: f64) -> Result<()> {
        match self {
            GenOpt::Sgd => sgd_step(params, grads, lr),
            GenOpt::Adam(state) => {
                state.lr = lr;
                state.step(params, grads)
            }
        }
    }

    /// Optimizer state for checkpointing; SGD runs store a zeroed block.
    fn checkpoint_state(&self, param_count: usize, lr: f64) -> AdamState<f64> {
        match self {
            GenOpt::Sgd => AdamState::new(param_count, lr),
            GenOpt::Adam(state) => state.clone(),
        }
    }
}

/// Full configuration of one training run.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub mode: FlowMode,
    /// Euler time step.
    pub epsilon: f64,
    /// Persistency level: generator steps per epoch on the frozen minibatch.
    pub k: u64,
    /// Generator learning rate.
    pub gamma_g: f64,
    /// Minibatch size.
    pub m: usize,
    /// Latent dimension.
    pub latent: usize,
    pub epochs: u64,
    pub seed: u64,
    pub critic: CriticConfig,
    pub optimizer: GenOptimizer,
    /// Hidden width of both networks.
    pub hidden_width: usize,
    /// Hidden layer count of both networks.
    pub hidden_depth: usize,
    /// Checkpoint interval in epochs; 0 disables checkpoints.
    pub checkpoint_every: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            mode: FlowMode::W1fe,
            epsilon: 1.0,
            k: 1,
            gamma_g: 1e-4,
            m: 512,
            latent: 2,
            epochs: 1000,
            seed: 0,
            critic: CriticConfig::default(),
            optimizer: GenOptimizer::Adam,
            hidden_width: 128,
            hidden_depth: 3,
            checkpoint_every: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::config("flow.epsilon must be finite and > 0"));
        }
        if self.k == 0 {
            return Err(Error::config("flow.K must be >= 1"));
        }
        if self.gamma_g <= 0.0 || !self.gamma_g.is_finite() {
            return Err(Error::config("flow.gamma_g must be finite and > 0"));
        }
        if self.m == 0 {
            return Err(Error::config("flow.batch must be >= 1"));
        }
        if self.latent == 0 {
            return Err(Error::config("flow.latent must be >= 1"));
        }
        if self.hidden_width == 0 {
            return Err(Error::config("net.hidden_width must be >= 1"));
        }
        self.critic.validate()
    }

    /// The persistency level actually applied: plain WGAN performs exactly
    /// one update per epoch regardless of the configured `K`.
    pub fn effective_k(&self) -> u64 {
        if self.mode == FlowMode::Wgan {
            1
        } else {
            self.k
        }
    }
}

/// `zeta_i = y_i - eps * grad(phi)(y_i)` rowwise.
pub fn euler_targets(phi: &Params<f64>, y: &Tensor<f64>, eps: f64) -> Result<Tensor<f64>> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::invalid("time step must be finite and >= 0"));
    }
    let grad = input_gradients(phi, y)?;
    let mut zeta = y.clone();
    for (t, g) in zeta.data_mut().iter_mut().zip(grad.data()) {
        *t -= eps * g;
    }
    Ok(zeta)
}

/// Mean squared Euclidean distance between `G(z)` rows and target rows:
/// `(1/m) * sum_i |zeta_i - G(z_i)|^2`.
pub fn mse_to_targets(gen: &Params<f64>, z: &Tensor<f64>, zeta: &Tensor<f64>) -> Result<f64> {
    let y = gen.forward(z)?;
    if y.shape() != zeta.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse_to_targets",
            lhs: y.shape(),
            rhs: zeta.shape(),
        });
    }
    let m = z.rows() as f64;
    let total: f64 = y
        .data()
        .iter()
        .zip(zeta.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / m)
}

/// Loss value and parameter gradient of `(1/m) * sum_i |zeta_i - G(z_i)|^2`.
fn target_regression_grads(
    gen: &Params<f64>,
    z: &Tensor<f64>,
    zeta: &Tensor<f64>,
) -> Result<(f64, Vec<f64>)> {
    let mut g: Graph<f64> = Graph::new();
    let leaves = param_leaves(&mut g, gen, true)?;
    let z_in = g.constant(z.clone())?;
    let out = graph_forward(&mut g, gen.spec(), &leaves, z_in)?;
    let zeta_in = g.constant(zeta.clone())?;
    let diff = g.subtract(out, zeta_in)?;
    let sq = g.square(diff)?;
    let total = g.sum(sq)?;
    let loss = g.scale(total, 1.0 / z.rows() as f64)?;
    let value = g.value(loss).scalar_value()?;
    let grads = g.backward(loss)?;
    Ok((value, flatten_param_grads(gen, &leaves, &grads)))
}

/// `K` descent steps on the target regression loss with `z` and `zeta`
/// frozen throughout (the same minibatch is reused for every step). Returns
/// the loss observed at the last step, before its update.
pub fn persistent_generator_update(
    gen: &mut Params<f64>,
    z: &Tensor<f64>,
    zeta: &Tensor<f64>,
    k: u64,
    gamma_g: f64,
    opt: &mut GenOpt,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("persistency level must be >= 1"));
    }
    if z.rows() != zeta.rows() {
        return Err(Error::ShapeMismatch {
            op: "persistent_generator_update",
            lhs: z.shape(),
            rhs: zeta.shape(),
        });
    }
    let mut loss = 0.0;
    for _ in 0..k {
        let (value, grads) = target_regression_grads(gen, z, zeta)?;
        loss = value;
        opt.step(gen, &grads, gamma_g)?;
    }
    Ok(loss)
}

/// Objective value and generator gradient of `mean phi(G(z))` with the
/// critic's parameters held constant.
fn wgan_objective_grads(
    gen: &Params<f64>,
    z: &Tensor<f64>,
    phi: &Params<f64>,
) -> Result<(f64, Vec<f64>)> {
    let mut g: Graph<f64> = Graph::new();
    let leaves = param_leaves(&mut g, gen, true)?;
    let phi_leaves = param_leaves(&mut g, phi, false)?;
    let z_in = g.constant(z.clone())?;
    let y = graph_forward(&mut g, gen.spec(), &leaves, z_in)?;
    let out = graph_forward(&mut g, phi.spec(), &phi_leaves, y)?;
    let loss = g.mean(out)?;
    let value = g.value(loss).scalar_value()?;
    let grads = g.backward(loss)?;
    Ok((value, flatten_param_grads(gen, &leaves, &grads)))
}

/// One descent step on `mean phi(G(z))` at learning rate `gamma`. Returns
/// the objective before the update.
pub fn wgan_generator_update(
    gen: &mut Params<f64>,
    z: &Tensor<f64>,
    phi: &Params<f64>,
    gamma: f64,
    opt: &mut GenOpt,
) -> Result<f64> {
    let (value, grads) = wgan_objective_grads(gen, z, phi)?;
    opt.step(gen, &grads, gamma)?;
    Ok(value)
}

/// The WGAN update repeated `k` times on the same `z` batch with `phi`
/// fixed. Returns the objective at the last step, before its update.
pub fn wgan_persistent_update(
    gen: &mut Params<f64>,
    z: &Tensor<f64>,
    phi: &Params<f64>,
    gamma: f64,
    k: u64,
    opt: &mut GenOpt,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("persistency level must be >= 1"));
    }
    let mut value = 0.0;
    for _ in 0..k {
        value = wgan_generator_update(gen, z, phi, gamma, opt)?;
    }
    Ok(value)
}

/// Outcome of [`equivalence_check`]: how far the persistent update at
/// learning rate `gamma_g` lands from the WGAN update at `2*gamma_g*eps`,
/// starting from identical parameters.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceReport {
    pub k: u64,
    pub epsilon: f64,
    /// `max_j |theta_a_j - theta_b_j|` over all parameters after the updates.
    pub max_abs_discrepancy: f64,
    /// Larger of the two updates' max-norms, for scale.
    pub update_magnitude: f64,
}

impl EquivalenceReport {
    /// Discrepancy relative to the update magnitude. Zero when both updates
    /// agree exactly, including the degenerate all-zero case.
    pub fn relative(&self) -> f64 {
        if self.max_abs_discrepancy == 0.0 {
            0.0
        } else {
            self.max_abs_discrepancy / self.update_magnitude
        }
    }
}

/// Runs the two update rules side by side from a shared random init, under
/// plain SGD, and reports the parameter discrepancy. At `k = 1` the two are
/// the same rule written differently and the relative discrepancy is at
/// rounding level; at `k >= 2` they genuinely diverge.
pub fn equivalence_check_at(seed: u64, k: u64, eps: f64) -> Result<EquivalenceReport> {
    const LATENT: usize = 2;
    const DIM: usize = 2;
    const WIDTH: usize = 16;
    const DEPTH: usize = 2;
    const M: usize = 32;
    const GAMMA: f64 = 1e-3;
    let gen0: Params<f64> = Params::init(
        MlpSpec::uniform(LATENT, WIDTH, DEPTH, DIM, Activation::LeakyRelu(HIDDEN_ALPHA))?,
        lane_seed(seed, 0, lanes::INIT_GENERATOR),
    );
    let phi: Params<f64> = Params::init(
        MlpSpec::uniform(DIM, WIDTH, DEPTH, 1, Activation::LeakyRelu(HIDDEN_ALPHA))?,
        lane_seed(seed, 0, lanes::INIT_CRITIC),
    );
    let z = prior_sample_with(LATENT, M, &mut lane_rng(seed, 0, lanes::PRIOR))?;

    let mut gen_a = gen0.clone();
    let y = gen_a.forward(&z)?;
    let zeta = euler_targets(&phi, &y, eps)?;
    persistent_generator_update(&mut gen_a, &z, &zeta, k, GAMMA, &mut GenOpt::Sgd)?;

    let mut gen_b = gen0.clone();
    wgan_persistent_update(&mut gen_b, &z, &phi, 2.0 * GAMMA * eps, k, &mut GenOpt::Sgd)?;

    let mut discrepancy = 0.0f64;
    let mut magnitude = 0.0f64;
    for i in 0..gen0.len() {
        let base = gen0.values()[i];
        let a = gen_a.values()[i];
        let b = gen_b.values()[i];
        discrepancy = discrepancy.max((a - b).abs());
        magnitude = magnitude.max((a - base).abs()).max((b - base).abs());
    }
    Ok(EquivalenceReport {
        k,
        epsilon: eps,
        max_abs_discrepancy: discrepancy,
        update_magnitude: magnitude,
    })
}

/// The `k = 1` check at a fixed nontrivial time step.
pub fn equivalence_check(seed: u64) -> Result<EquivalenceReport> {
    equivalence_check_k(seed, 1)
}

/// Same setup at an arbitrary persistency level.
pub fn equivalence_check_k(seed: u64, k: u64) -> Result<EquivalenceReport> {
    equivalence_check_at(seed, k, 0.7)
}

/// Where the particle flow gets its potential.
#[derive(Debug, Clone)]
pub enum PotentialSource {
    /// Exact piecewise-linear transport potential; one-dimensional clouds
    /// only.
    Oracle1d,
    /// A critic trained between steps against the current cloud; works in
    /// any dimension.
    TrainedCritic {
        spec: MlpSpec,
        config: CriticConfig,
    },
}

/// A particle cloud trajectory: snapshots at times `0, eps, 2*eps, ...`.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    epsilon: f64,
    snapshots: Vec<(f64, Tensor<f64>)>,
}

impl FlowTrajectory {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn snapshots(&self) -> &[(f64, Tensor<f64>)] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn terminal(&self) -> &Tensor<f64> {
        &self.snapshots.last().expect("trajectory holds t = 0").1
    }

    /// Uniform measure on snapshot `i`'s particles.
    pub fn measure(&self, i: usize) -> Result<DiscreteMeasure> {
        DiscreteMeasure::uniform(self.snapshots[i].1.clone())
    }
}

/// Moves every particle by `-eps * grad(phi)` per step for `n_steps` steps
/// and records each intermediate cloud (including the initial one at time
/// zero).
pub fn particle_flow_run(
    initial: &Tensor<f64>,
    target: &DiscreteMeasure,
    eps: f64,
    n_steps: usize,
    source: &PotentialSource,
) -> Result<FlowTrajectory> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::invalid("time step must be finite and > 0"));
    }
    if !initial.all_finite() {
        return Err(Error::NonFinite {
            op: "particle_flow_run",
        });
    }
    if initial.rows() == 0 {
        return Err(Error::invalid("initial cloud must hold at least one particle"));
    }
    if initial.cols() != target.dim() {
        return Err(Error::ShapeMismatch {
            op: "particle_flow_run",
            lhs: initial.shape(),
            rhs: (target.len(), target.dim()),
        });
    }
    let mut cloud = initial.clone();
    let mut snapshots = vec![(0.0, cloud.clone())];
    match source {
        PotentialSource::Oracle1d => {
            if initial.cols() != 1 {
                return Err(Error::invalid(
                    "the exact potential source handles one-dimensional clouds only",
                ));
            }
            for n in 1..=n_steps {
                let mu = DiscreteMeasure::uniform(cloud.clone())?;
                let pot = kantorovich_potential_1d(&mu, target)?;
                pot.flow(cloud.data_mut(), eps);
                snapshots.push((n as f64 * eps, cloud.clone()));
            }
        }
        PotentialSource::TrainedCritic { spec, config } => {
            if spec.input_width() != initial.cols() || spec.output_width() != 1 {
                return Err(Error::config(
                    "critic spec must map the cloud dimension to a scalar",
                ));
            }
            let mut phi: Params<f64> =
                Params::init(spec.clone(), lane_seed(config.seed, 0, lanes::INIT_CRITIC));
            let mut adam = AdamState::new(phi.len(), config.lr);
            for n in 1..=n_steps {
                let mut cfg = *config;
                cfg.seed = lane_seed(config.seed, n as u64, lanes::CRITIC);
                let batch = cloud.clone();
                let mut gen_batches =
                    move |_: &mut ChaCha8Rng| -> Result<Tensor<f64>> { Ok(batch.clone()) };
                train_critic(&mut phi, &mut adam, &cfg, target, &mut gen_batches)?;
                let grad = input_gradients(&phi, &cloud)?;
                for (c, g) in cloud.data_mut().iter_mut().zip(grad.data()) {
                    *c -= eps * g;
                }
                if !cloud.all_finite() {
                    return Err(Error::NonFinite {
                        op: "particle_flow_run",
                    });
                }
                snapshots.push((n as f64 * eps, cloud.clone()));
            }
        }
    }
    Ok(FlowTrajectory {
        epsilon: eps,
        snapshots,
    })
}

/// What [`run_experiment`] hands back besides the CSV on disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<EpochRecord>,
    pub metrics_path: PathBuf,
}

struct EpochOutcome {
    w1: f64,
    objective: f64,
    penalty: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    config: &FlowConfig,
    dataset: &Dataset,
    epoch: u64,
    gen: &mut Params<f64>,
    gen_opt: &mut GenOpt,
    phi: &mut Params<f64>,
    critic_adam: &mut AdamState<f64>,
    pool_n: usize,
    n_metric: usize,
) -> Result<EpochOutcome> {
    let master = config.seed;
    let latent = config.latent;
    let m = config.m;

    let pool = dataset.sample_with(pool_n, &mut lane_rng(master, epoch, lanes::DATA))?;
    let data_measure = DiscreteMeasure::uniform(pool)?;
    let mut critic_cfg = config.critic;
    critic_cfg.seed = lane_seed(master, epoch, lanes::CRITIC);
    let report = simulate_phi(
        gen,
        &data_measure,
        &mut |rng| prior_sample_with(latent, m, rng),
        &critic_cfg,
        phi,
        critic_adam,
    )?;

    let z = prior_sample_with(latent, m, &mut lane_rng(master, epoch, lanes::PRIOR))?;
    match config.mode {
        FlowMode::W1fe => {
            let y = gen.forward(&z)?;
            let zeta = euler_targets(phi, &y, config.epsilon)?;
            persistent_generator_update(
                gen,
                &z,
                &zeta,
                config.effective_k(),
                config.gamma_g,
                gen_opt,
            )?;
        }
        FlowMode::Wgan => {
            wgan_generator_update(gen, &z, phi, config.gamma_g, gen_opt)?;
        }
        FlowMode::WganPersistent => {
            wgan_persistent_update(gen, &z, phi, config.gamma_g, config.effective_k(), gen_opt)?;
        }
        FlowMode::Particle => unreachable!("rejected by run_experiment"),
    }

    let data_metric = dataset.sample_with(n_metric, &mut lane_rng(master, epoch, lanes::METRIC_DATA))?;
    let z_metric = prior_sample_with(latent, n_metric, &mut lane_rng(master, epoch, lanes::METRIC_PRIOR))?;
    let y_metric = gen.forward(&z_metric)?;
    let (w1, _, _) = w1_exact(
        &DiscreteMeasure::uniform(y_metric.clone())?,
        &DiscreteMeasure::uniform(data_metric.clone())?,
    )?;
    let objective = critic_objective(phi, &y_metric, &data_metric)?;
    Ok(EpochOutcome {
        w1,
        objective,
        penalty: report.penalty,
    })
}

/// The main training loop. Per epoch: train the critic, take the
/// mode-specific generator update, then measure the exact transport distance
/// between fresh generated and data batches. Every record is flushed to
/// `metrics.csv` as it is produced, so an aborted run leaves a valid partial
/// file; checkpoints of both networks land under `checkpoints/` at the
/// configured interval.
pub fn run_experiment(
    config: &FlowConfig,
    dataset: &Dataset,
    out_dir: &Path,
) -> Result<RunSummary> {
    config.validate()?;
    dataset.validate()?;
    if config.mode == FlowMode::Particle {
        return Err(Error::config(
            "particle mode moves a cloud directly and has no generator loop; use the particle entry point",
        ));
    }
    let dim = dataset.dim();
    let gen_spec = MlpSpec::uniform(
        config.latent,
        config.hidden_width,
        config.hidden_depth,
        dim,
        Activation::LeakyRelu(HIDDEN_ALPHA),
    )?;
    let phi_spec = MlpSpec::uniform(
        dim,
        config.hidden_width,
        config.hidden_depth,
        1,
        Activation::LeakyRelu(HIDDEN_ALPHA),
    )?;
    let master = config.seed;
    let mut gen: Params<f64> = Params::init(gen_spec, lane_seed(master, 0, lanes::INIT_GENERATOR));
    let mut phi: Params<f64> = Params::init(phi_spec, lane_seed(master, 0, lanes::INIT_CRITIC));
    let mut critic_adam = AdamState::new(phi.len(), config.critic.lr);
    let mut gen_opt = GenOpt::new(config.optimizer, gen.len(), config.gamma_g);

    let metrics_path = out_dir.join("metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path)?;
    let mut records = Vec::new();
    let start = Instant::now();
    // The critic draws its data minibatches from a pool refreshed each
    // epoch, sized so that every critic step sees (statistically) new data.
    let pool_n = config.m * config.critic.n_critic;
    let n_metric = config.m.min(METRIC_CAP);

    for epoch in 1..=config.epochs {
        let outcome = run_epoch(
            config,
            dataset,
            epoch,
            &mut gen,
            &mut gen_opt,
            &mut phi,
            &mut critic_adam,
            pool_n,
            n_metric,
        )
        .map_err(|e| Error::invalid(format!("run aborted at epoch {epoch}: {e}")))?;
        let record = EpochRecord {
            epoch,
            wallclock_s: start.elapsed().as_secs_f64(),
            w1_minibatch: outcome.w1,
            critic_objective: outcome.objective,
            penalty: outcome.penalty,
            k: config.effective_k(),
            epsilon: config.epsilon,
            seed: master,
            mode: config.mode.name().to_string(),
        };
        writer.write(&record)?;
        records.push(record);
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            let dir = out_dir.join("checkpoints");
            let gen_state = gen_opt.checkpoint_state(gen.len(), config.gamma_g);
            checkpoint_save(&gen, &gen_state, &dir.join(format!("epoch_{epoch}.w1fe")))?;
            checkpoint_save(
                &phi,
                &critic_adam,
                &dir.join(format!("epoch_{epoch}.critic.w1fe")),
            )?;
        }
    }
    Ok(RunSummary {
        records,
        metrics_path,
    })
}
