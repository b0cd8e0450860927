//! Command-line front end for the training engine.
//!
//! Subcommands: `train` (generator training loop), `particle` (generator-free
//! cloud transport), `oracle` (exact transport checks on point files),
//! `equivalence` (update-rule discrepancy report), and `sweep` (a persistency
//! grid of otherwise-identical training arms).
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures (including a failed oracle check).

use clap::{Args, CommandFactory, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use w1fe::config::{EngineConfig, ParticleSourceKind};
use w1fe::data::{lane_rng, lanes, prior_sample_with};
use w1fe::flow::{equivalence_check_k, particle_flow_run, run_experiment, FlowMode};
use w1fe::metrics::{read_metrics, MetricsWriter};
use w1fe::ot::{convexity_gap, lfd_sandwich_check, w1_exact, DiscreteMeasure, CONVEXITY_TOL};
use w1fe::tensor::Tensor;
use w1fe::Error;

#[derive(Parser)]
#[command(
    name = "w1fe",
    version,
    about = "Wasserstein-1 gradient-flow training engine",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training loop and write per-epoch metrics.
    Train(RunArgs),
    /// Transport a particle cloud directly, without a generator.
    Particle(RunArgs),
    /// Exact optimal-transport computations on point files.
    Oracle {
        #[command(subcommand)]
        check: OracleCommand,
    },
    /// Report the parameter discrepancy between the two K-step update rules.
    Equivalence {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Persistency level; the rules provably coincide only at 1.
        #[arg(long = "K", default_value_t = 1)]
        k: u64,
    },
    /// Run otherwise-identical training arms over a persistency grid.
    Sweep(SweepArgs),
}

/// Flags shared by every run-producing subcommand. Each flag overrides the
/// matching config-file key; unset flags leave file or default values.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file of `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training mode: w1fe, wgan, wgan_persistent, or particle.
    #[arg(long)]
    mode: Option<String>,
    /// Euler time step.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Generator learning rate.
    #[arg(long = "gamma-g", allow_negative_numbers = true)]
    gamma_g: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    /// Critic flavor: clip, gp, or lp.
    #[arg(long = "critic-variant")]
    critic_variant: Option<String>,
    /// Penalty weight for gp/lp critics.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Critic steps per epoch.
    #[arg(long = "n-critic")]
    n_critic: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Accepted for interface stability; runs are single-threaded and
    /// always deterministic under a fixed seed.
    #[arg(long)]
    deterministic: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint interval in epochs (0 disables).
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Persistency level: generator steps per frozen minibatch.
    #[arg(long = "K")]
    k: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated persistency grid.
    #[arg(long = "K", value_delimiter = ',', default_value = "1,3,5,10")]
    k_grid: Vec<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact transport distance between two uniform point clouds.
    W1 {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
    },
    /// Difference-quotient bracket of the transport energy along the mixture
    /// toward `nu`; fails (exit 2) if the bracket is violated.
    Sandwich {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long = "mu-d")]
        mu_d: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        eps: f64,
    },
    /// Convexity slack of the transport energy at one mixture; fails
    /// (exit 2) on a negative gap beyond tolerance.
    Convexity {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long = "mu-d")]
        mu_d: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive as "errors" but are successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::Particle(args) => particle(&args),
        Command::Oracle { check } => oracle(&check),
        Command::Equivalence { seed, k } => equivalence(seed, k),
        Command::Sweep(args) => sweep(&args),
    }
}

/// Defaults, then the config file, then explicit flags.
fn effective_config(k: Option<u64>, common: &CommonArgs) -> Result<EngineConfig, Error> {
    let mut config = match &common.config {
        Some(path) => EngineConfig::from_file(path)?,
        None => EngineConfig::default(),
    };
    if let Some(v) = &common.mode {
        config.set("run.mode", v)?;
    }
    if let Some(v) = k {
        config.set("flow.K", &v.to_string())?;
    }
    if let Some(v) = common.epsilon {
        config.set("flow.epsilon", &v.to_string())?;
    }
    if let Some(v) = common.gamma_g {
        config.set("flow.gamma_g", &v.to_string())?;
    }
    if let Some(v) = common.batch {
        config.set("flow.batch", &v.to_string())?;
    }
    if let Some(v) = common.epochs {
        config.set("run.epochs", &v.to_string())?;
    }
    if let Some(v) = &common.critic_variant {
        config.set("critic.variant", v)?;
    }
    if let Some(v) = common.lambda {
        config.set("critic.lambda", &v.to_string())?;
    }
    if let Some(v) = common.n_critic {
        config.set("critic.n_critic", &v.to_string())?;
    }
    if let Some(v) = common.seed {
        config.set("run.seed", &v.to_string())?;
    }
    if common.deterministic {
        config.set("run.deterministic", "true")?;
    }
    if let Some(v) = &common.out {
        config.out = v.clone();
    }
    if let Some(v) = common.checkpoint_every {
        config.set("run.checkpoint_every", &v.to_string())?;
    }
    config.validate()?;
    Ok(config)
}

fn write_echo(config: &EngineConfig, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.echo"), config.echo())?;
    Ok(())
}

fn train(args: &RunArgs) -> Result<(), Error> {
    let config = effective_config(args.k, &args.common)?;
    let out = config.out.clone();
    write_echo(&config, &out)?;
    let summary = run_experiment(&config.flow_config(), &config.dataset()?, &out)?;
    match summary.records.last() {
        Some(last) => println!(
            "wrote {} epoch records to {} (final minibatch W1 {:.6})",
            summary.records.len(),
            summary.metrics_path.display(),
            last.w1_minibatch
        ),
        None => println!(
            "wrote header-only metrics file to {}",
            summary.metrics_path.display()
        ),
    }
    Ok(())
}

fn particle(args: &RunArgs) -> Result<(), Error> {
    let mut config = effective_config(args.k, &args.common)?;
    config.mode = FlowMode::Particle;
    let out = config.out.clone();
    write_echo(&config, &out)?;
    let dataset = config.dataset()?;
    let dim = dataset.dim();
    if matches!(config.particle_source, ParticleSourceKind::Oracle) && dim != 1 {
        return Err(Error::config(
            "particle.source = oracle needs one-dimensional data (data.kind = gaussian1d); \
             use particle.source = critic for higher-dimensional targets",
        ));
    }
    let n = config.particle_n;
    let target = DiscreteMeasure::uniform(
        dataset.sample_with(n, &mut lane_rng(config.seed, 0, lanes::DATA))?,
    )?;
    let initial = prior_sample_with(dim, n, &mut lane_rng(config.seed, 0, lanes::PRIOR))?;
    let source = config.particle_source()?;
    let trajectory = particle_flow_run(
        &initial,
        &target,
        config.epsilon,
        config.particle_steps,
        &source,
    )?;

    let mut csv = String::from("t,particle");
    for d in 0..dim {
        csv.push_str(&format!(",x{}", d + 1));
    }
    csv.push('\n');
    for (t, cloud) in trajectory.snapshots() {
        for i in 0..cloud.rows() {
            csv.push_str(&t.to_string());
            csv.push(',');
            csv.push_str(&i.to_string());
            for d in 0..dim {
                csv.push(',');
                csv.push_str(&cloud.get(i, d).to_string());
            }
            csv.push('\n');
        }
    }
    let path = out.join("trajectory.csv");
    fs::write(&path, csv)?;
    for i in 0..trajectory.len() {
        let (t, _) = trajectory.snapshots()[i];
        let (w1, _, _) = w1_exact(&trajectory.measure(i)?, &target)?;
        println!("t={t} W1={w1:.6}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// One point per line, comma-separated coordinates, uniform weights.
fn read_cloud(path: &Path) -> Result<DiscreteMeasure, Error> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse()).collect();
        let row = row.map_err(|_| {
            Error::config(format!(
                "{}:{}: cannot parse '{line}' as comma-separated floats",
                path.display(),
                lineno + 1
            ))
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config(format!(
            "{}: no points found",
            path.display()
        )));
    }
    DiscreteMeasure::uniform(Tensor::from_rows(&rows)?)
}

fn oracle(check: &OracleCommand) -> Result<(), Error> {
    match check {
        OracleCommand::W1 { mu, nu } => {
            let mu = read_cloud(mu)?;
            let nu = read_cloud(nu)?;
            let (value, _, _) = w1_exact(&mu, &nu)?;
            println!("w1 = {value}");
        }
        OracleCommand::Sandwich { mu, nu, mu_d, eps } => {
            let mu = read_cloud(mu)?;
            let nu = read_cloud(nu)?;
            let mu_d = read_cloud(mu_d)?;
            let report = lfd_sandwich_check(&mu, &nu, &mu_d, *eps)?;
            println!(
                "lower = {}\nquotient = {}\nupper = {}\nholds = {}",
                report.lower, report.ratio, report.upper, report.holds
            );
            if !report.holds {
                return Err(Error::invalid(
                    "difference quotient escapes the potential-integral bracket",
                ));
            }
        }
        OracleCommand::Convexity {
            mu,
            nu,
            mu_d,
            lambda,
        } => {
            let mu = read_cloud(mu)?;
            let nu = read_cloud(nu)?;
            let mu_d = read_cloud(mu_d)?;
            let gap = convexity_gap(&mu, &nu, &mu_d, *lambda)?;
            println!("convexity gap = {gap}");
            if gap < -CONVEXITY_TOL {
                return Err(Error::invalid(format!(
                    "transport energy convexity violated by {gap}"
                )));
            }
        }
    }
    Ok(())
}

fn equivalence(seed: u64, k: u64) -> Result<(), Error> {
    let report = equivalence_check_k(seed, k)?;
    println!(
        "K = {}\nmax abs discrepancy = {:e}\nupdate magnitude = {:e}\nrelative = {:e}",
        report.k,
        report.max_abs_discrepancy,
        report.update_magnitude,
        report.relative()
    );
    let rel = report.relative();
    if k == 1 && (rel >= 1e-8 || rel.is_nan()) {
        return Err(Error::invalid(format!(
            "K=1 update rules disagree: relative discrepancy {:e}",
            report.relative()
        )));
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    if args.k_grid.is_empty() {
        return Err(Error::config("sweep needs at least one K value"));
    }
    let base = effective_config(None, &args.common)?;
    if base.mode == FlowMode::Particle {
        return Err(Error::config("sweep drives training modes only"));
    }
    let out = base.out.clone();
    fs::create_dir_all(&out)?;
    let mut first_echo: Option<String> = None;
    let mut merged = MetricsWriter::create(&out.join("merged.csv"))?;
    for &k in &args.k_grid {
        let mut arm = base.clone();
        arm.set("flow.K", &k.to_string())?;
        arm.out = out.join(format!("K{k}"));
        write_echo(&arm, &arm.out.clone())?;

        // The arms must differ from each other only in the persistency
        // level; anything else would invalidate the comparison.
        let echo = arm.echo();
        match &first_echo {
            None => first_echo = Some(echo),
            Some(reference) => {
                for (a, b) in reference.lines().zip(echo.lines()) {
                    if a != b && !a.starts_with("flow.K ") {
                        return Err(Error::invalid(format!(
                            "sweep arms diverge beyond K: '{a}' vs '{b}'"
                        )));
                    }
                }
            }
        }

        let summary = run_experiment(&arm.flow_config(), &arm.dataset()?, &arm.out)?;
        for record in &summary.records {
            merged.write(record)?;
        }
        let final_w1 = summary
            .records
            .last()
            .map(|r| format!("{:.6}", r.w1_minibatch))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "K={k}: {} epochs, final minibatch W1 {final_w1} ({})",
            summary.records.len(),
            summary.metrics_path.display()
        );
    }
    // Re-read the merged file so a schema regression cannot go unnoticed.
    let rows = read_metrics(&out.join("merged.csv"))?;
    println!(
        "merged {} rows across {} arms into {}",
        rows.len(),
        args.k_grid.len(),
        out.join("merged.csv").display()
    );
    Ok(())
}

#[allow(dead_code)]
fn assert_cli_wiring() {
    Cli::command().debug_assert();
}
