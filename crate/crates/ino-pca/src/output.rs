//! Plot-ready artifact emission: CSV tables with one-line headers, a
//! byte-stable JSON manifest that fully specifies each run, and a JSON
//! run summary with provenance details.
//!
//! Floats are rendered with the shortest representation that round-trips
//! (`{:?}`), so emitted tables are exact and reruns of a deterministic
//! command compare byte-for-byte.

use crate::error::Result;
use crate::harness::{Aggregate, DensityStudy, Lambda0Sweep, MomentReport, MultiPcTrace, PhasePoint};
use crate::theory_ode::{SteadyState, TheoryTrajectory};
use crate::theory_pde::PdeRun;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn float(v: f64) -> String {
    format!("{v:?}")
}

/// Makes a string safe for use as a file-name component: path separators,
/// colons (from rate grammars like `ino:0.5`), and whitespace become dashes.
pub fn sanitize_component(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ':' | '/' | '\\' | ' ' | '\t' => '-',
            other => other,
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// `t,Q_mean,Q_std,lambda_mean,lambda_std[,Q_theory,lambda_theory]`
pub fn write_aggregate_csv(path: &Path, agg: &Aggregate) -> Result<()> {
    let with_theory = agg.q_theory.is_some();
    let mut out = String::from(if with_theory {
        "t,Q_mean,Q_std,lambda_mean,lambda_std,Q_theory,lambda_theory\n"
    } else {
        "t,Q_mean,Q_std,lambda_mean,lambda_std\n"
    });
    for i in 0..agg.t.len() {
        out.push_str(&float(agg.t[i]));
        for col in [&agg.q_mean, &agg.q_std, &agg.lambda_mean, &agg.lambda_std] {
            out.push(',');
            out.push_str(&float(col[i]));
        }
        if with_theory {
            out.push(',');
            out.push_str(&float(agg.q_theory.as_ref().unwrap()[i]));
            out.push(',');
            out.push_str(&float(agg.lambda_theory.as_ref().unwrap()[i]));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// `t,x,P_marginal,P_marginal_rescaled` — one row per (snapshot, grid point).
pub fn write_pde_csv(path: &Path, run: &PdeRun) -> Result<()> {
    let mut out = String::from("t,x,P_marginal,P_marginal_rescaled\n");
    for snap in &run.snapshots {
        for (j, &x) in run.x_grid.iter().enumerate() {
            out.push_str(&float(snap.t));
            out.push(',');
            out.push_str(&float(x));
            out.push(',');
            out.push_str(&float(snap.marginal[j]));
            out.push(',');
            out.push_str(&float(snap.rescaled[j]));
            out.push('\n');
        }
    }
    write_file(path, &out)
}

/// `omega,Q_s_theory,Q_s_empirical,Q_s_empirical_std`
pub fn write_phase_csv(path: &Path, points: &[PhasePoint]) -> Result<()> {
    let mut out = String::from("omega,Q_s_theory,Q_s_empirical,Q_s_empirical_std\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            float(p.omega),
            float(p.q_s_theory),
            float(p.q_s_empirical),
            float(p.q_s_empirical_std)
        ));
    }
    write_file(path, &out)
}

/// `t,Q,lambda`
pub fn write_theory_trajectory_csv(path: &Path, traj: &TheoryTrajectory) -> Result<()> {
    let mut out = String::from("t,Q,lambda\n");
    for i in 0..traj.t.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            float(traj.t[i]),
            float(traj.q[i]),
            float(traj.lambda[i])
        ));
    }
    write_file(path, &out)
}

/// `omega,Q_s,lambda_s,branch,omega_c` — the threshold column is constant
/// (it depends only on the learning rate) and is carried on every row so the
/// table is self-contained.
pub fn write_theory_phase_csv(
    path: &Path,
    rows: &[(f64, SteadyState)],
    omega_c: f64,
) -> Result<()> {
    let mut out = String::from("omega,Q_s,lambda_s,branch,omega_c\n");
    for (omega, s) in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            float(*omega),
            float(s.q_s()),
            float(s.lambda_s),
            s.branch,
            float(omega_c)
        ));
    }
    write_file(path, &out)
}

/// `omega,Q_s,lambda_s,branch` — single-row table for one steady state.
pub fn write_steady_csv(path: &Path, omega: f64, s: &SteadyState) -> Result<()> {
    let out = format!(
        "omega,Q_s,lambda_s,branch\n{},{},{},{}\n",
        float(omega),
        float(s.q_s()),
        float(s.lambda_s),
        s.branch
    );
    write_file(path, &out)
}

/// `lambda0,Q_eval_mean,Q_eval_std,Q_final_mean,Q_final_std` with the
/// evaluation time recorded in the header comment row of the summary, not
/// here; the table stays purely numeric.
pub fn write_lambda0_csv(path: &Path, sweep: &Lambda0Sweep) -> Result<()> {
    let mut out = String::from("lambda0,Q_eval_mean,Q_eval_std,Q_final_mean,Q_final_std\n");
    for p in &sweep.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            float(p.lambda0),
            float(p.q_eval_mean),
            float(p.q_eval_std),
            float(p.q_final_mean),
            float(p.q_final_std)
        ));
    }
    write_file(path, &out)
}

/// `lambda0,t,Q,lambda` — the matching closed-form trajectories, long format.
pub fn write_lambda0_theory_csv(path: &Path, sweep: &Lambda0Sweep) -> Result<()> {
    let mut out = String::from("lambda0,t,Q,lambda\n");
    for (lambda0, traj) in &sweep.theory {
        for i in 0..traj.t.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                float(*lambda0),
                float(traj.t[i]),
                float(traj.q[i]),
                float(traj.lambda[i])
            ));
        }
    }
    write_file(path, &out)
}

/// `t,dist_mean,dist_std`
pub fn write_multipc_csv(path: &Path, trace: &MultiPcTrace) -> Result<()> {
    let mut out = String::from("t,dist_mean,dist_std\n");
    for i in 0..trace.t.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            float(trace.t[i]),
            float(trace.d_mean[i]),
            float(trace.d_std[i])
        ));
    }
    write_file(path, &out)
}

/// `t,x,empirical,empirical_rescaled,P_marginal,P_marginal_rescaled` — the
/// histogram/theory comparison on the shared bin grid, long format.
pub fn write_density_comparison_csv(path: &Path, study: &DensityStudy) -> Result<()> {
    let mut out = String::from("t,x,empirical,empirical_rescaled,P_marginal,P_marginal_rescaled\n");
    for cmp in &study.comparisons {
        for (j, &x) in study.grid.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                float(cmp.t),
                float(x),
                float(cmp.empirical[j]),
                float(cmp.empirical_rescaled[j]),
                float(cmp.pde_marginal[j]),
                float(cmp.pde_rescaled[j])
            ));
        }
    }
    write_file(path, &out)
}

/// `t,l1_raw,l1_rescaled,Q_sim,Q_pde,lambda_sim,lambda_pde` — one row per
/// snapshot of a density study.
pub fn write_density_l1_csv(path: &Path, study: &DensityStudy) -> Result<()> {
    let mut out = String::from("t,l1_raw,l1_rescaled,Q_sim,Q_pde,lambda_sim,lambda_pde\n");
    for cmp in &study.comparisons {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            float(cmp.t),
            float(cmp.l1_raw),
            float(cmp.l1_rescaled),
            float(cmp.q_sim),
            float(cmp.q_pde),
            float(cmp.lambda_sim),
            float(cmp.lambda_pde)
        ));
    }
    write_file(path, &out)
}

/// Pretty JSON for the frozen-state moment report.
pub fn write_moment_report(path: &Path, report: &MomentReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_file(path, &text)
}

/// Fully specifies one run: re-invoking the binary with `command` reproduces
/// every listed output byte-for-byte. Serialization order is fixed, so the
/// manifest itself is deterministic for a given invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Fully resolved argument list (defaults and config-file values baked
    /// in), suitable for re-invoking the binary directly.
    pub command: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Output paths relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        command: Vec<String>,
        seed: u64,
        config: serde_json::Value,
        outputs: Vec<String>,
    ) -> Self {
        RunManifest {
            tool: "ino-pca".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            command,
            seed,
            config,
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(path, &text)
    }
}

/// Human-facing provenance record: echoes the configuration and seed, states
/// the source revision, and reports wall time. Unlike the manifest this is
/// not byte-stable across reruns (wall time varies).
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub subcommand: String,
    pub seed: u64,
    pub git_describe: String,
    pub wall_time_seconds: f64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl RunSummary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(path, &text)
    }
}

/// Best-effort source revision: `git describe --always --dirty --tags` in the
/// current directory, or "unknown" outside a repository.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Measures wall time for summary emission.
pub struct RunTimer(Instant);

impl RunTimer {
    pub fn start() -> Self {
        RunTimer(Instant::now())
    }

    pub fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Joins an output directory and a sanitized base name with an extension.
pub fn artifact_path(dir: &Path, base: &str, ext: &str) -> PathBuf {
    dir.join(format!("{}.{ext}", sanitize_component(base)))
}
