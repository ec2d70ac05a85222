//! End-to-end tests of the installed binary: pinned stdout lines, exit-code
//! contract, config-file precedence, and artifact determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ino-pca"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn steady_subcommand_prints_the_pinned_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["theory", "steady", "--omega", "1", "--tau", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(
        text.lines().next().unwrap(),
        "branch=learning Q_s=0.881917 lambda_s=2.0",
        "full stdout: {text}"
    );
}

#[test]
fn identical_invocations_write_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--p", "100", "--t-max", "1", "--trials", "2", "--seed", "7",
    ];
    let first = run_in(dir.path(), &args);
    assert_eq!(first.status.code(), Some(0));
    let csv_path = dir.path().join("simulate_ino-0.5_p100.csv");
    let manifest_path = dir.path().join("simulate_ino-0.5_p100.manifest.json");
    let csv_1 = std::fs::read(&csv_path).unwrap();
    let manifest_1 = std::fs::read(&manifest_path).unwrap();

    let second = run_in(dir.path(), &args);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(csv_1, std::fs::read(&csv_path).unwrap());
    assert_eq!(manifest_1, std::fs::read(&manifest_path).unwrap());
}

#[test]
fn config_file_is_applied_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, "p = 80\nt_max = 1.0\ntrials = 2\nseed = 3\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "--p",
            "90",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(
        dir.path().join("simulate_ino-0.5_p90.csv").exists(),
        "CLI --p must override the config file's p"
    );
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("simulate_ino-0.5_p90.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["p"], 90);
    assert_eq!(manifest["config"]["seed"], 3, "file seed applies when not overridden");
    assert_eq!(manifest["config"]["trials"], 2);
}

#[test]
fn configuration_problems_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--algo", "bogus"],
        vec!["simulate", "--p", "1"],
        vec!["simulate", "--xi", "sparse:1.5"],
        vec!["theory", "phase", "--omega-grid", "1:0:0.1"],
        vec!["sweep", "lambda0", "--values", "not-a-number"],
    ] {
        let out = run_in(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
    }
    // Unknown flags are a usage error (also exit code 2).
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Malformed config file.
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "p = \"many\"\n").unwrap();
    let out = run_in(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_divergence_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--algo", "ino:1000", "--p", "100", "--t-max", "2", "--trials", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("out of band"), "stderr: {err}");
}

#[test]
fn help_and_version_exit_cleanly() {
    for args in [vec!["--help"], vec!["--version"], vec!["simulate", "--help"]] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "args {args:?}");
    }
    let out = bin().arg("--help").output().unwrap();
    let text = stdout(&out);
    for sub in ["simulate", "theory", "sweep", "switch", "multipc", "check", "reproduce"] {
        assert!(text.contains(sub), "top-level help must list `{sub}`:\n{text}");
    }
}

#[test]
fn multipc_ingests_a_csv_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let matrix_path = dir.path().join("data.csv");
    // 40 rows of a noisy rank-1 pattern in 6 columns.
    let mut text = String::new();
    for i in 0..40 {
        let c = if i % 2 == 0 { 1.0 } else { -1.0 };
        let row: Vec<String> = (0..6)
            .map(|j| {
                let signal = c * if j < 3 { 1.0 } else { -1.0 };
                let jitter = ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5;
                format!("{:?}", signal + 0.3 * jitter)
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&matrix_path, text).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "multipc",
            "--matrix",
            matrix_path.to_str().unwrap(),
            "--r",
            "1",
            "--t-max",
            "3",
            "--trials",
            "2",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("multipc_r1_ino-0.5.csv").exists());

    // A ragged matrix is a parse error (exit 2) naming the offending row.
    std::fs::write(&matrix_path, "1.0,2.0\n3.0\n").unwrap();
    let out = run_in(
        dir.path(),
        &["multipc", "--matrix", matrix_path.to_str().unwrap(), "--r", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn theory_outputs_land_in_the_requested_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["theory", "ode", "--tau", "0.5", "--t-max", "2", "--dt", "0.01"],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = dir.path().join("theory_ode_omega1.0_0.5.csv");
    assert!(csv.exists());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,Q,lambda\n"));
    assert_eq!(text.lines().count(), 202, "header + 201 grid points");
}
