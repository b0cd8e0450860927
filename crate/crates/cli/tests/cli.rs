//! End-to-end tests of the `w1fe` binary: exit codes, output files, and the
//! stdout contracts of each subcommand.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn w1fe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_w1fe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// A config that keeps training runs inside a test-sized budget.
fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "data.kind = gaussian1d\n\
         data.mean = 1.5\n\
         data.std = 0.2\n\
         flow.batch = 16\n\
         flow.latent = 1\n\
         flow.epsilon = 0.5\n\
         flow.gamma_g = 0.001\n\
         critic.n_critic = 2\n\
         net.hidden_width = 8\n\
         net.hidden_depth = 1\n\
         run.epochs = 2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&w1fe(&["--help"])), 0);
    assert_eq!(code(&w1fe(&["--version"])), 0);
    assert_eq!(code(&w1fe(&["train", "--help"])), 0);
}

#[test]
fn unknown_flags_and_subcommands_are_usage_errors() {
    let out = w1fe(&["train", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--no-such-flag"));
    assert_eq!(code(&w1fe(&["frobnicate"])), 1);
    assert_eq!(code(&w1fe(&[])), 1);
}

#[test]
fn invalid_config_values_are_usage_errors() {
    assert_eq!(code(&w1fe(&["train", "--mode", "bogus"])), 1);
    let out = w1fe(&["train", "--epsilon", "-1", "--epochs", "0"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("epsilon"));
}

#[test]
fn zero_epoch_train_writes_header_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = w1fe(&[
        "train",
        "--epochs",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(
        metrics.trim_end(),
        "epoch,wallclock_s,w1_minibatch,critic_objective,penalty,K,epsilon,seed,mode"
    );
    let echo = fs::read_to_string(out_dir.join("config.echo")).unwrap();
    assert!(echo.contains("run.epochs = 0"));
    assert!(!echo.contains("run.out"));
}

#[test]
fn tiny_train_run_writes_rows_and_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out_dir = dir.path().join("run");
    let out = w1fe(&[
        "train",
        "--config",
        &config,
        "--epochs",
        "3",
        "--K",
        "2",
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("3 epoch records"));
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "flag must override the file's epochs = 2");
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[5], "2", "K column");
        assert_eq!(fields[7], "9", "seed column");
        assert_eq!(fields[8], "w1fe", "mode column");
    }
    let echo = fs::read_to_string(out_dir.join("config.echo")).unwrap();
    assert!(echo.contains("run.epochs = 3"));
    assert!(echo.contains("flow.K = 2"));
}

#[test]
fn equivalence_reports_a_tiny_k1_discrepancy() {
    let out = w1fe(&["equivalence", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let relative: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("relative = "))
        .expect("relative line")
        .parse()
        .unwrap();
    assert!(relative < 1e-8, "relative = {relative}");
}

#[test]
fn equivalence_at_k2_reports_without_failing() {
    let out = w1fe(&["equivalence", "--seed", "3", "--K", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let discrepancy: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max abs discrepancy = "))
        .expect("discrepancy line")
        .parse()
        .unwrap();
    assert!(discrepancy > 0.0);
}

#[test]
fn oracle_w1_matches_a_hand_instance() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.csv");
    let nu = dir.path().join("nu.csv");
    fs::write(&mu, "0\n2\n").unwrap();
    fs::write(&nu, "3\n1\n").unwrap();
    let out = w1fe(&[
        "oracle",
        "w1",
        "--mu",
        mu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "w1 = 1");
}

#[test]
fn oracle_sandwich_and_convexity_pass_on_sane_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.csv");
    let nu = dir.path().join("nu.csv");
    let mu_d = dir.path().join("mud.csv");
    fs::write(&mu, "0,0\n1,0\n").unwrap();
    fs::write(&nu, "2,1\n3,0\n").unwrap();
    fs::write(&mu_d, "5,0\n4,2\n").unwrap();
    let out = w1fe(&[
        "oracle",
        "sandwich",
        "--mu",
        mu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
        "--mu-d",
        mu_d.to_str().unwrap(),
        "--eps",
        "0.1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("holds = true"));
    let out = w1fe(&[
        "oracle",
        "convexity",
        "--mu",
        mu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
        "--mu-d",
        mu_d.to_str().unwrap(),
        "--lambda",
        "0.4",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("convexity gap = "));
}

#[test]
fn oracle_on_a_missing_file_is_a_runtime_error() {
    let out = w1fe(&[
        "oracle",
        "w1",
        "--mu",
        "/nonexistent/mu.csv",
        "--nu",
        "/nonexistent/nu.csv",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn particle_run_prints_a_decreasing_w1_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out_dir = dir.path().join("pt");
    let out = w1fe(&[
        "particle",
        "--config",
        &config,
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace: Vec<f64> = stdout(&out)
        .lines()
        .filter_map(|l| l.split("W1=").nth(1))
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(trace.len() >= 2);
    assert!(
        trace.last().unwrap() < trace.first().unwrap(),
        "W1 should fall: {trace:?}"
    );
    let trajectory = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("t,particle,x1\n"));
}

#[test]
fn particle_oracle_source_rejects_two_dimensional_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = w1fe(&[
        "particle",
        "--out",
        dir.path().join("pt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("one-dimensional"));
}

#[test]
fn sweep_writes_per_arm_outputs_and_a_merged_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = w1fe(&[
        "sweep",
        "--K",
        "1,2",
        "--config",
        &config,
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for k in [1, 2] {
        let arm = out_dir.join(format!("K{k}"));
        assert!(arm.join("metrics.csv").is_file());
        assert!(arm.join("config.echo").is_file());
    }
    // The two echoes must differ exactly in the persistency line.
    let echo1 = fs::read_to_string(out_dir.join("K1/config.echo")).unwrap();
    let echo2 = fs::read_to_string(out_dir.join("K2/config.echo")).unwrap();
    let diff: Vec<(&str, &str)> = echo1
        .lines()
        .zip(echo2.lines())
        .filter(|(a, b)| a != b)
        .collect();
    assert_eq!(diff, vec![("flow.K = 1", "flow.K = 2")]);
    let merged = fs::read_to_string(out_dir.join("merged.csv")).unwrap();
    let k_column: Vec<&str> = merged
        .lines()
        .skip(1)
        .map(|row| row.split(',').nth(5).unwrap())
        .collect();
    assert_eq!(k_column, vec!["1", "1", "2", "2"]);
}
