//! Run configuration: a flat `section.key = value` text format, default
//! values, and the layering rule (defaults, then file, then command-line
//! overrides).
//!
//! The effective configuration can be echoed back as sorted `key = value`
//! lines; the echo covers every key except `run.out`, so two echoes from a
//! sweep can be compared line by line to prove the arms differ only where
//! intended.

use crate::data::{Dataset, RingSpec};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowMode, GenOptimizer, PotentialSource, HIDDEN_ALPHA};
use crate::nn::{Activation, MlpSpec};
use crate::potential::{CriticConfig, CriticVariant};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Which dataset the run draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Ring,
    Gaussian1d,
}

impl DataKind {
    pub fn name(&self) -> &'static str {
        match self {
            DataKind::Ring => "ring",
            DataKind::Gaussian1d => "gaussian1d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(DataKind::Ring),
            "gaussian1d" => Ok(DataKind::Gaussian1d),
            other => Err(Error::config(format!(
                "unknown data.kind '{other}' (expected ring or gaussian1d)"
            ))),
        }
    }
}

/// Potential source for the particle mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleSourceKind {
    /// Exact one-dimensional transport potential.
    Oracle,
    /// Critic trained between steps.
    Critic,
}

impl ParticleSourceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ParticleSourceKind::Oracle => "oracle",
            ParticleSourceKind::Critic => "critic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(ParticleSourceKind::Oracle),
            "critic" => Ok(ParticleSourceKind::Critic),
            other => Err(Error::config(format!(
                "unknown particle.source '{other}' (expected oracle or critic)"
            ))),
        }
    }
}

/// Every tunable of the engine, with defaults matching the headline ring
/// benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    // run.*
    pub mode: FlowMode,
    pub epochs: u64,
    pub seed: u64,
    /// Accepted for interface stability; the engine is single-threaded and
    /// always deterministic under a fixed seed.
    pub deterministic: bool,
    pub checkpoint_every: u64,
    pub out: PathBuf,
    // flow.*
    pub epsilon: f64,
    pub k: u64,
    pub gamma_g: f64,
    pub batch: usize,
    pub latent: usize,
    pub optimizer: GenOptimizer,
    // critic.*
    pub critic_variant: CriticVariant,
    pub lambda: f64,
    pub clip: f64,
    pub n_critic: usize,
    pub critic_lr: f64,
    pub fresh_batches: bool,
    // data.*
    pub data_kind: DataKind,
    pub n_modes: usize,
    pub radius: f64,
    pub mode_std: f64,
    pub mean: f64,
    pub std: f64,
    // net.*
    pub hidden_width: usize,
    pub hidden_depth: usize,
    // particle.*
    pub particle_n: usize,
    pub particle_steps: usize,
    pub particle_source: ParticleSourceKind,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let critic = CriticConfig::default();
        let ring = RingSpec::default();
        EngineConfig {
            mode: FlowMode::W1fe,
            epochs: 1000,
            seed: 0,
            deterministic: false,
            checkpoint_every: 0,
            out: PathBuf::from("out"),
            epsilon: 1.0,
            k: 1,
            gamma_g: 1e-4,
            batch: 512,
            latent: 2,
            optimizer: GenOptimizer::Adam,
            critic_variant: critic.variant,
            lambda: critic.lambda,
            clip: critic.clip,
            n_critic: critic.n_critic,
            critic_lr: critic.lr,
            fresh_batches: critic.fresh_batches,
            data_kind: DataKind::Ring,
            n_modes: ring.n_modes,
            radius: ring.radius,
            mode_std: ring.mode_std,
            mean: 2.0,
            std: 0.1,
            hidden_width: 128,
            hidden_depth: 3,
            particle_n: 50,
            particle_steps: 8,
            particle_source: ParticleSourceKind::Oracle,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::config(format!(
            "{key}: expected true or false, got '{other}'"
        ))),
    }
}

impl EngineConfig {
    /// Applies one `key = value` assignment. Unknown keys are rejected so a
    /// typo cannot silently fall back to a default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "run.mode" => self.mode = FlowMode::parse(value)?,
            "run.epochs" => self.epochs = parse_num(key, value)?,
            "run.seed" => self.seed = parse_num(key, value)?,
            "run.deterministic" => self.deterministic = parse_bool(key, value)?,
            "run.checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "run.out" => self.out = PathBuf::from(value),
            "flow.epsilon" => self.epsilon = parse_num(key, value)?,
            "flow.K" => self.k = parse_num(key, value)?,
            "flow.gamma_g" => self.gamma_g = parse_num(key, value)?,
            "flow.batch" => self.batch = parse_num(key, value)?,
            "flow.latent" => self.latent = parse_num(key, value)?,
            "flow.optimizer" => self.optimizer = GenOptimizer::parse(value)?,
            "critic.variant" => self.critic_variant = CriticVariant::parse(value)?,
            "critic.lambda" => self.lambda = parse_num(key, value)?,
            "critic.clip" => self.clip = parse_num(key, value)?,
            "critic.n_critic" => self.n_critic = parse_num(key, value)?,
            "critic.lr" => self.critic_lr = parse_num(key, value)?,
            "critic.fresh_batches" => self.fresh_batches = parse_bool(key, value)?,
            "data.kind" => self.data_kind = DataKind::parse(value)?,
            "data.n_modes" => self.n_modes = parse_num(key, value)?,
            "data.radius" => self.radius = parse_num(key, value)?,
            "data.mode_std" => self.mode_std = parse_num(key, value)?,
            "data.mean" => self.mean = parse_num(key, value)?,
            "data.std" => self.std = parse_num(key, value)?,
            "net.hidden_width" => self.hidden_width = parse_num(key, value)?,
            "net.hidden_depth" => self.hidden_depth = parse_num(key, value)?,
            "particle.n" => self.particle_n = parse_num(key, value)?,
            "particle.steps" => self.particle_steps = parse_num(key, value)?,
            "particle.source" => self.particle_source = ParticleSourceKind::parse(value)?,
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses config-file text: one `section.key = value` per line, `#`
    /// comments, blank lines ignored, duplicate keys rejected.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if let Some(first) = seen.insert(key.to_string(), lineno + 1) {
                return Err(Error::config(format!(
                    "line {}: duplicate key '{key}' (first set on line {first})",
                    lineno + 1
                )));
            }
            self.set(key, value)
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Defaults overlaid with a config file.
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = EngineConfig::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    /// The effective configuration as sorted `key = value` lines. `run.out`
    /// is deliberately absent: the echo describes the run, not where its
    /// outputs landed, so echoes stay comparable across output directories.
    pub fn echo(&self) -> String {
        let mut entries: Vec<(&str, String)> = vec![
            ("critic.clip", self.clip.to_string()),
            ("critic.fresh_batches", self.fresh_batches.to_string()),
            ("critic.lambda", self.lambda.to_string()),
            ("critic.lr", self.critic_lr.to_string()),
            ("critic.n_critic", self.n_critic.to_string()),
            ("critic.variant", self.critic_variant.name().to_string()),
            ("data.kind", self.data_kind.name().to_string()),
            ("data.mean", self.mean.to_string()),
            ("data.mode_std", self.mode_std.to_string()),
            ("data.n_modes", self.n_modes.to_string()),
            ("data.radius", self.radius.to_string()),
            ("data.std", self.std.to_string()),
            ("flow.K", self.k.to_string()),
            ("flow.batch", self.batch.to_string()),
            ("flow.epsilon", self.epsilon.to_string()),
            ("flow.gamma_g", self.gamma_g.to_string()),
            ("flow.latent", self.latent.to_string()),
            ("flow.optimizer", self.optimizer.name().to_string()),
            ("net.hidden_depth", self.hidden_depth.to_string()),
            ("net.hidden_width", self.hidden_width.to_string()),
            ("particle.n", self.particle_n.to_string()),
            ("particle.source", self.particle_source.name().to_string()),
            ("particle.steps", self.particle_steps.to_string()),
            ("run.checkpoint_every", self.checkpoint_every.to_string()),
            ("run.deterministic", self.deterministic.to_string()),
            ("run.epochs", self.epochs.to_string()),
            ("run.mode", self.mode.name().to_string()),
            ("run.seed", self.seed.to_string()),
        ];
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (key, value) in entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// The critic block with the run's master seed; the training loop
    /// replaces the seed per epoch.
    pub fn critic_config(&self) -> CriticConfig {
        CriticConfig {
            variant: self.critic_variant,
            lambda: self.lambda,
            clip: self.clip,
            n_critic: self.n_critic,
            lr: self.critic_lr,
            fresh_batches: self.fresh_batches,
            seed: self.seed,
        }
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            mode: self.mode,
            epsilon: self.epsilon,
            k: self.k,
            gamma_g: self.gamma_g,
            m: self.batch,
            latent: self.latent,
            epochs: self.epochs,
            seed: self.seed,
            critic: self.critic_config(),
            optimizer: self.optimizer,
            hidden_width: self.hidden_width,
            hidden_depth: self.hidden_depth,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let dataset = match self.data_kind {
            DataKind::Ring => Dataset::Ring(RingSpec {
                n_modes: self.n_modes,
                radius: self.radius,
                mode_std: self.mode_std,
                seed: self.seed,
            }),
            DataKind::Gaussian1d => Dataset::Gaussian1d {
                mean: self.mean,
                std: self.std,
            },
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Builds the particle mode's potential source for the configured data
    /// dimension.
    pub fn particle_source(&self) -> Result<PotentialSource> {
        match self.particle_source {
            ParticleSourceKind::Oracle => Ok(PotentialSource::Oracle1d),
            ParticleSourceKind::Critic => {
                let dim = self.dataset()?.dim();
                Ok(PotentialSource::TrainedCritic {
                    spec: MlpSpec::uniform(
                        dim,
                        self.hidden_width,
                        self.hidden_depth,
                        1,
                        Activation::LeakyRelu(HIDDEN_ALPHA),
                    )?,
                    config: self.critic_config(),
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flow_config().validate()?;
        self.dataset()?;
        if self.particle_n == 0 {
            return Err(Error::config("particle.n must be >= 1"));
        }
        Ok(())
    }
}
