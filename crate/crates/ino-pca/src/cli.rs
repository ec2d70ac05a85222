//! Command-line interface: every experiment and theory computation as a
//! subcommand with reproducible, manifest-described outputs.
//!
//! Configuration precedence is CLI flag > TOML config file > built-in
//! default. Each run writes its data artifacts plus a `*.manifest.json`
//! (fully resolved invocation — re-running its `command` array reproduces
//! the artifacts byte-for-byte) and a `*.summary.json` (config echo, seed,
//! source revision, wall time). Data lines go to stdout, progress notes to
//! stderr. Exit codes: 0 success, 2 configuration/input error, 3 numerical
//! failure.

use crate::algorithms::AlgorithmSpec;
use crate::error::{Error, Result};
use crate::harness::{
    self, ExperimentConfig, MomentCheckConfig, MultiPcSource, SwitchSpec,
};
use crate::output::{
    self, artifact_path, sanitize_component, RunManifest, RunSummary, RunTimer,
};
use crate::spiked_model::{InitKind, SignalKind};
use crate::theory_ode::{
    critical_snr, integrate, steady_state, OdeParams, RateRule, SteadyState, DEFAULT_DT,
};
use crate::theory_pde::{
    evolve_density, MomentSource, PdeConfig, SignalAtoms, DEFAULT_ATOM_COUNT,
    DEFAULT_GRID_POINTS, DEFAULT_PDE_DT,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Fallback environment variable for `--threads`.
pub const THREADS_ENV: &str = "INO_PCA_THREADS";

const DEFAULT_BINS: usize = 54;

#[derive(Parser, Debug)]
#[command(
    name = "ino-pca",
    version,
    about = "Streaming PCA laboratory: spiked-model simulators, closed-form theory, and Monte Carlo experiments",
    propagate_version = true
)]
pub struct Cli {
    /// Worker threads for trial parallelism; falls back to the
    /// INO_PCA_THREADS environment variable [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for CSV/JSON artifacts
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo run of one estimator; optionally joins the closed-form
    /// moment-flow columns
    Simulate {
        #[command(flatten)]
        sim: SimFlags,
        /// Add Q_theory/lambda_theory columns (ino/ada-ino only)
        #[arg(long)]
        theory: bool,
    },
    /// Closed-form results: moment flow, coordinate density, steady states,
    /// phase diagram
    Theory {
        #[command(subcommand)]
        cmd: TheoryCmd,
    },
    /// Parameter sweeps pairing simulation with theory
    Sweep {
        #[command(subcommand)]
        cmd: SweepCmd,
    },
    /// Non-stationary protocol: replace the signal mid-run and track recovery
    Switch {
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Track a multi-component subspace against an offline eigenvector oracle
    Multipc {
        #[command(flatten)]
        sim: SimFlags,
        /// Number of components [default: 2]
        #[arg(long)]
        r: Option<usize>,
        /// Comma-separated component strengths [default: r,r-1,...,1]
        #[arg(long)]
        omegas: Option<String>,
        /// CSV matrix (one sample per row) streamed instead of the synthetic
        /// model; rows are mean-centered and cycled
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Self-checks against frozen-state oracles
    Check {
        #[command(subcommand)]
        cmd: CheckCmd,
    },
    /// Re-create the published experiment artifacts (desk scale by default)
    Reproduce {
        /// Which figure preset to run
        #[arg(value_enum)]
        figure: Figure,
        /// Published scale: p = 10000, 20 trials (desk scale: p = 2000
        /// or preset-specific, 10 trials)
        #[arg(long)]
        paper_scale: bool,
        /// Master RNG seed [default: 1234]
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum TheoryCmd {
    /// Integrate the coupled overlap/norm moment flow; CSV `t,Q,lambda`
    Ode {
        /// Signal-to-noise ratio [default: 1.0]
        #[arg(long)]
        omega: Option<f64>,
        /// Fixed learning rate [default: 0.5]
        #[arg(long)]
        tau: Option<f64>,
        /// Use the oracle-adaptive rate instead of a fixed one
        #[arg(long)]
        adaptive: bool,
        /// Initial overlap [default: 0.1]
        #[arg(long)]
        q0: Option<f64>,
        /// Initial norm parameter [default: 1.0]
        #[arg(long)]
        lambda0: Option<f64>,
        /// Horizon in macroscopic time [default: 30]
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        /// Integrator step [default: 0.001]
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Evolve the coordinate density; CSV `t,x,P_marginal,P_marginal_rescaled`
    Pde {
        /// Signal-to-noise ratio [default: 1.0]
        #[arg(long)]
        omega: Option<f64>,
        /// Learning rate [default: 0.5]
        #[arg(long)]
        tau: Option<f64>,
        /// Signal distribution: uniform | expshift[:BIAS] | sparse[:RHO]
        /// [default: uniform]
        #[arg(long)]
        xi: Option<String>,
        /// Initialization: cold | warm[:C] [default: warm:0.1]
        #[arg(long)]
        init: Option<String>,
        /// Initial norm parameter [default: 1.0]
        #[arg(long)]
        lambda0: Option<f64>,
        /// Comma-separated snapshot times [default: 2,5,10]
        #[arg(long)]
        snapshots: Option<String>,
        /// Spatial cells [default: 1024]
        #[arg(long = "grid-points")]
        grid_points: Option<usize>,
        /// Domain half-width [default: auto from omega/lambda0/signal]
        #[arg(long = "half-width")]
        half_width: Option<f64>,
        /// Time-step cap [default: 0.001]
        #[arg(long)]
        dt: Option<f64>,
        /// Order-parameter source: self-consistent | ode-driven
        /// [default: self-consistent]
        #[arg(long = "moment-source")]
        moment_source: Option<String>,
        /// Initial overlap for the driving flow (ode-driven only)
        /// [default: warm-start c]
        #[arg(long)]
        q0: Option<f64>,
    },
    /// Evaluate the steady state; prints `branch=... Q_s=... lambda_s=...`
    Steady {
        /// Signal-to-noise ratio [default: 1.0]
        #[arg(long)]
        omega: Option<f64>,
        /// Learning rate [default: 0.5]
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Steady states across a signal-to-noise grid; CSV
    /// `omega,Q_s,lambda_s,branch,omega_c`
    Phase {
        /// Learning rate [default: 0.5]
        #[arg(long)]
        tau: Option<f64>,
        /// Grid as START:END:STEP [default: 0:1:0.05]
        #[arg(long = "omega-grid")]
        omega_grid: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum SweepCmd {
    /// Sweep the initial norm parameter; early-time overlap is rate-matching
    /// sensitive, the steady state is not
    Lambda0 {
        #[command(flatten)]
        sim: SimFlags,
        /// Comma-separated λ₀ values [default: 0.1,0.25,0.5,1,2,4]
        #[arg(long)]
        values: Option<String>,
        /// Early evaluation time [default: 3]
        #[arg(long = "t-eval")]
        t_eval: Option<f64>,
    },
    /// Sweep the signal-to-noise ratio; pairs empirical steady overlap with
    /// the closed form
    Omega {
        #[command(flatten)]
        sim: SimFlags,
        /// Comma-separated ω values
        /// [default: 0.05,0.1,0.15,0.2,0.25,0.3,0.4,0.6,0.8,1]
        #[arg(long)]
        values: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CheckCmd {
    /// Freeze a state, resample observations, and compare empirical increment
    /// moments against their closed forms
    Moments {
        /// Ambient dimension [default: 500]
        #[arg(long)]
        p: Option<usize>,
        /// Signal-to-noise ratio [default: 1.0]
        #[arg(long)]
        omega: Option<f64>,
        /// Learning rate [default: 0.5]
        #[arg(long)]
        tau: Option<f64>,
        /// Signal distribution [default: uniform]
        #[arg(long)]
        xi: Option<String>,
        /// Frozen-state initialization [default: warm:0.3]
        #[arg(long)]
        init: Option<String>,
        /// Frozen-state norm parameter [default: 1.0]
        #[arg(long)]
        lambda0: Option<f64>,
        /// Number of resampled observations [default: 10000]
        #[arg(long)]
        resamples: Option<usize>,
        /// RNG seed [default: 1234]
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Coordinate densities vs theory at three times
    Fig1,
    /// Overlap/norm trajectories vs the moment flow
    Fig2,
    /// Steady overlap across the learning threshold
    Fig4,
    /// Oracle-adaptive rate vs fixed rates
    Fig5,
    /// Initial-norm sensitivity at early times
    Fig6,
    /// Recovery after an abrupt signal switch
    Fig7,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }
}

/// Shared experiment flags. Every value is optional: unset flags fall back
/// to the TOML config file (if given), then to built-in defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct SimFlags {
    /// TOML config file; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ambient dimension [default: 2000]
    #[arg(long)]
    pub p: Option<usize>,
    /// Signal-to-noise ratio [default: 1.0]
    #[arg(long)]
    pub omega: Option<f64>,
    /// Default learning rate for rate-taking algorithms [default: 0.5]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Algorithm: ino[:T] | reg[:T] | oja[:T] | krasulina[:T] | ada-ino |
    /// ccipca[:L] | adaoja[:B] [default: ino]
    #[arg(long)]
    pub algo: Option<String>,
    /// Signal distribution: uniform | expshift[:BIAS] | sparse[:RHO]
    /// [default: uniform]
    #[arg(long)]
    pub xi: Option<String>,
    /// Initialization: cold | warm[:C] [default: warm:0.1]
    #[arg(long)]
    pub init: Option<String>,
    /// Initial norm parameter [default: 1.0]
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Horizon in macroscopic time t = k/p [default: 30]
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    /// Monte Carlo trials [default: 10]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master RNG seed; trial i uses stream i [default: 1234]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trace cadence in macroscopic time [default: 0.1]
    #[arg(long = "sample-every")]
    pub sample_every: Option<f64>,
    /// Signal switch time (switch subcommand only)
    #[arg(long = "switch-t")]
    pub switch_t: Option<f64>,
    /// Post-switch signal distribution, same grammar as --xi
    /// [default: sparse:0.05]
    #[arg(long)]
    pub xi2: Option<String>,
}

/// TOML mirror of [`SimFlags`]; unknown keys are rejected so typos surface
/// as configuration errors.
#[derive(serde::Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    p: Option<usize>,
    omega: Option<f64>,
    tau: Option<f64>,
    algo: Option<String>,
    xi: Option<String>,
    init: Option<String>,
    lambda0: Option<f64>,
    t_max: Option<f64>,
    trials: Option<usize>,
    seed: Option<u64>,
    sample_every: Option<f64>,
    switch_t: Option<f64>,
    xi2: Option<String>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| {
                Error::Config(format!("malformed config file {}: {e}", p.display()))
            })
        }
    }
}

/// Applies CLI > file > default precedence on top of a subcommand-specific
/// base configuration.
fn resolve_experiment(flags: &SimFlags, base: &ExperimentConfig) -> Result<ExperimentConfig> {
    let file = load_file_config(flags.config.as_deref())?;
    let tau = flags.tau.or(file.tau).unwrap_or(0.5);
    let algorithm = match flags.algo.as_deref().or(file.algo.as_deref()) {
        Some(s) => AlgorithmSpec::parse(s, tau)?,
        None => AlgorithmSpec::Ino { tau },
    };
    let xi = match flags.xi.as_deref().or(file.xi.as_deref()) {
        Some(s) => s.parse::<SignalKind>()?,
        None => base.xi,
    };
    let init = match flags.init.as_deref().or(file.init.as_deref()) {
        Some(s) => s.parse::<InitKind>()?,
        None => base.init,
    };
    let switch = match flags.switch_t.or(file.switch_t) {
        None => {
            if flags.xi2.is_some() || file.xi2.is_some() {
                return Err(Error::Config(
                    "--xi2 requires --switch-t (it names the post-switch signal)".into(),
                ));
            }
            None
        }
        Some(t_switch) => Some(SwitchSpec {
            t_switch,
            xi2: match flags.xi2.as_deref().or(file.xi2.as_deref()) {
                Some(s) => s.parse::<SignalKind>()?,
                None => SignalKind::SparseMixture { rho: 0.05 },
            },
        }),
    };
    let config = ExperimentConfig {
        p: flags.p.or(file.p).unwrap_or(base.p),
        omega: flags.omega.or(file.omega).unwrap_or(base.omega),
        algorithm,
        xi,
        init,
        lambda0: flags.lambda0.or(file.lambda0).unwrap_or(base.lambda0),
        t_max: flags.t_max.or(file.t_max).unwrap_or(base.t_max),
        trials: flags.trials.or(file.trials).unwrap_or(base.trials),
        seed: flags.seed.or(file.seed).unwrap_or(base.seed),
        sample_every: flags.sample_every.or(file.sample_every).unwrap_or(base.sample_every),
        switch,
    };
    config.validate()?;
    Ok(config)
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

/// Fully resolved argv for a simulation-style subcommand, suitable for the
/// manifest's `command` field.
fn resolved_sim_argv(sub: &[&str], cfg: &ExperimentConfig, extra: &[String]) -> Vec<String> {
    let mut argv: Vec<String> = sub.iter().map(|s| s.to_string()).collect();
    let pairs = [
        ("--p", cfg.p.to_string()),
        ("--omega", f(cfg.omega)),
        ("--algo", cfg.algorithm.to_string()),
        ("--xi", cfg.xi.to_string()),
        ("--init", cfg.init.to_string()),
        ("--lambda0", f(cfg.lambda0)),
        ("--t-max", f(cfg.t_max)),
        ("--trials", cfg.trials.to_string()),
        ("--seed", cfg.seed.to_string()),
        ("--sample-every", f(cfg.sample_every)),
    ];
    for (k, v) in pairs {
        argv.push(k.into());
        argv.push(v);
    }
    if let Some(sw) = &cfg.switch {
        argv.push("--switch-t".into());
        argv.push(f(sw.t_switch));
        argv.push("--xi2".into());
        argv.push(sw.xi2.to_string());
    }
    argv.extend(extra.iter().cloned());
    argv
}

/// Writes the manifest and summary for a finished run and prints one stderr
/// notice per artifact.
fn emit_run_records(
    out_dir: &Path,
    base: &str,
    subcommand: &str,
    command: Vec<String>,
    seed: u64,
    config: serde_json::Value,
    outputs: Vec<String>,
    timer: &RunTimer,
) -> Result<()> {
    let manifest = RunManifest::new(subcommand, command, seed, config.clone(), outputs.clone());
    manifest.write(&artifact_path(out_dir, base, "manifest.json"))?;
    let summary = RunSummary {
        subcommand: subcommand.into(),
        seed,
        git_describe: output::git_describe(),
        wall_time_seconds: timer.seconds(),
        config,
        outputs: outputs.clone(),
    };
    summary.write(&artifact_path(out_dir, base, "summary.json"))?;
    for name in &outputs {
        eprintln!("wrote {}", out_dir.join(name).display());
    }
    eprintln!("wrote {}", artifact_path(out_dir, base, "manifest.json").display());
    eprintln!("wrote {}", artifact_path(out_dir, base, "summary.json").display());
    Ok(())
}

fn parse_float_list(s: &str, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry '{}'", t.trim())))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Config(format!("{what} list is empty")));
    }
    Ok(values)
}

/// Parses `START:END:STEP` into an inclusive grid.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "grid '{s}' must have the form START:END:STEP"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse grid entry '{}'", t.trim())))
        })
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || end < start || !start.is_finite() || !end.is_finite() {
        return Err(Error::Config(format!(
            "grid '{s}' needs START <= END and STEP > 0"
        )));
    }
    let mut values = Vec::new();
    let mut i = 0u64;
    loop {
        let v = start + i as f64 * step;
        if v > end + step * 1e-9 {
            break;
        }
        values.push(v.min(end));
        i += 1;
    }
    Ok(values)
}

fn steady_line(s: &SteadyState) -> String {
    format!("branch={} Q_s={:.6} lambda_s={:?}", s.branch, s.q_s(), s.lambda_s)
}

// ---------------------------------------------------------------------------
// Subcommand runners
// ---------------------------------------------------------------------------

fn run_simulate(out: &Path, sim: &SimFlags, theory: bool) -> Result<()> {
    let timer = RunTimer::start();
    let cfg = resolve_experiment(sim, &ExperimentConfig::desk_default())?;
    if cfg.switch.is_some() {
        return Err(Error::Config(
            "use the `switch` subcommand for non-stationary runs".into(),
        ));
    }
    let mut agg = harness::run_monte_carlo(&cfg)?;
    let mut extra = Vec::new();
    if theory {
        harness::attach_theory(&mut agg, &cfg)?;
        extra.push("--theory".to_string());
    }
    let base = format!("simulate_{}_p{}", cfg.algorithm, cfg.p);
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_aggregate_csv(&out.join(&csv), &agg)?;
    emit_run_records(
        out,
        &base,
        "simulate",
        resolved_sim_argv(&["simulate"], &cfg, &extra),
        cfg.seed,
        serde_json::to_value(&cfg)?,
        vec![csv],
        &timer,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_theory_ode(
    out: &Path,
    omega: Option<f64>,
    tau: Option<f64>,
    adaptive: bool,
    q0: Option<f64>,
    lambda0: Option<f64>,
    t_max: Option<f64>,
    dt: Option<f64>,
) -> Result<()> {
    let timer = RunTimer::start();
    let omega = omega.unwrap_or(1.0);
    let tau = tau.unwrap_or(0.5);
    let q0 = q0.unwrap_or(0.1);
    let lambda0 = lambda0.unwrap_or(1.0);
    let t_max = t_max.unwrap_or(30.0);
    let dt = dt.unwrap_or(DEFAULT_DT);
    let rate = if adaptive { RateRule::Adaptive } else { RateRule::Fixed(tau) };
    let params = OdeParams { omega, rate, q0, lambda0 };
    let traj = integrate(&params, t_max, dt)?;
    let rate_name = if adaptive { "adaptive".to_string() } else { f(tau) };
    let base = format!("theory_ode_omega{}_{}", f(omega), rate_name);
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_theory_trajectory_csv(&out.join(&csv), &traj)?;
    let mut command = vec!["theory".to_string(), "ode".to_string()];
    command.extend(["--omega".into(), f(omega)]);
    if adaptive {
        command.push("--adaptive".into());
    } else {
        command.extend(["--tau".into(), f(tau)]);
    }
    command.extend([
        "--q0".into(),
        f(q0),
        "--lambda0".into(),
        f(lambda0),
        "--t-max".into(),
        f(t_max),
        "--dt".into(),
        f(dt),
    ]);
    let config = serde_json::json!({
        "omega": omega, "adaptive": adaptive, "tau": tau,
        "q0": q0, "lambda0": lambda0, "t_max": t_max, "dt": dt,
    });
    emit_run_records(out, &base, "theory ode", command, 0, config, vec![csv], &timer)
}

#[allow(clippy::too_many_arguments)]
fn run_theory_pde(
    out: &Path,
    omega: Option<f64>,
    tau: Option<f64>,
    xi: Option<String>,
    init: Option<String>,
    lambda0: Option<f64>,
    snapshots: Option<String>,
    grid_points: Option<usize>,
    half_width: Option<f64>,
    dt: Option<f64>,
    moment_source: Option<String>,
    q0: Option<f64>,
) -> Result<()> {
    let timer = RunTimer::start();
    let omega = omega.unwrap_or(1.0);
    let tau = tau.unwrap_or(0.5);
    let xi: SignalKind = xi.as_deref().unwrap_or("uniform").parse()?;
    let init: InitKind = init.as_deref().unwrap_or("warm:0.1").parse()?;
    let lambda0 = lambda0.unwrap_or(1.0);
    let snapshot_spec = snapshots.unwrap_or_else(|| "2,5,10".into());
    let times = parse_float_list(&snapshot_spec, "snapshot")?;
    let source: MomentSource = moment_source
        .as_deref()
        .unwrap_or("self-consistent")
        .parse()?;
    let atoms = SignalAtoms::from_signal(&xi, DEFAULT_ATOM_COUNT)?;
    let config = PdeConfig {
        grid_points: grid_points.unwrap_or(DEFAULT_GRID_POINTS),
        half_width: half_width
            .unwrap_or_else(|| PdeConfig::default_half_width(omega, lambda0, &atoms)),
        dt: dt.unwrap_or(DEFAULT_PDE_DT),
        omega,
        tau,
        moment_source: source,
    };
    let ode = match source {
        MomentSource::SelfConsistent => {
            if q0.is_some() {
                return Err(Error::Config(
                    "--q0 only applies to --moment-source ode-driven".into(),
                ));
            }
            None
        }
        MomentSource::OdeDriven => {
            let q0 = match (q0, init) {
                (Some(v), _) => v,
                (None, InitKind::Warm { c }) => c,
                (None, InitKind::Cold) => {
                    return Err(Error::Config(
                        "ode-driven evolution from a cold start needs an explicit --q0 \
                         (the driving flow cannot start at exactly zero overlap)"
                            .into(),
                    ))
                }
            };
            let horizon = *times.last().expect("nonempty validated");
            Some(integrate(
                &OdeParams { omega, rate: RateRule::Fixed(tau), q0, lambda0 },
                horizon,
                DEFAULT_DT,
            )?)
        }
    };
    let run = evolve_density(config.clone(), atoms, init, lambda0, &times, ode)?;
    let base = format!("theory_pde_omega{}_tau{}", f(omega), f(tau));
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_pde_csv(&out.join(&csv), &run)?;
    for snap in &run.snapshots {
        println!("t={} Q={} lambda={}", f(snap.t), f(snap.q), f(snap.lambda));
    }
    let mut command = vec![
        "theory".to_string(),
        "pde".to_string(),
        "--omega".into(),
        f(omega),
        "--tau".into(),
        f(tau),
        "--xi".into(),
        xi.to_string(),
        "--init".into(),
        init.to_string(),
        "--lambda0".into(),
        f(lambda0),
        "--snapshots".into(),
        times.iter().map(|t| f(*t)).collect::<Vec<_>>().join(","),
        "--grid-points".into(),
        config.grid_points.to_string(),
        "--half-width".into(),
        f(config.half_width),
        "--dt".into(),
        f(config.dt),
        "--moment-source".into(),
        source.to_string(),
    ];
    if let (MomentSource::OdeDriven, InitKind::Warm { c }) = (source, init) {
        command.extend(["--q0".into(), f(q0.unwrap_or(c))]);
    } else if let Some(v) = q0 {
        command.extend(["--q0".into(), f(v)]);
    }
    let config_json = serde_json::json!({
        "pde": serde_json::to_value(&config)?,
        "xi": xi.to_string(),
        "init": init.to_string(),
        "lambda0": lambda0,
        "snapshots": times,
    });
    emit_run_records(out, &base, "theory pde", command, 0, config_json, vec![csv], &timer)
}

fn run_theory_steady(out: &Path, omega: Option<f64>, tau: Option<f64>) -> Result<()> {
    let timer = RunTimer::start();
    let omega = omega.unwrap_or(1.0);
    let tau = tau.unwrap_or(0.5);
    let s = steady_state(omega, tau)?;
    println!("{}", steady_line(&s));
    let base = format!("theory_steady_omega{}_tau{}", f(omega), f(tau));
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_steady_csv(&out.join(&csv), omega, &s)?;
    let command = vec![
        "theory".to_string(),
        "steady".to_string(),
        "--omega".into(),
        f(omega),
        "--tau".into(),
        f(tau),
    ];
    let config = serde_json::json!({ "omega": omega, "tau": tau });
    emit_run_records(out, &base, "theory steady", command, 0, config, vec![csv], &timer)
}

fn run_theory_phase(out: &Path, tau: Option<f64>, grid: Option<String>) -> Result<()> {
    let timer = RunTimer::start();
    let tau = tau.unwrap_or(0.5);
    let grid_spec = grid.unwrap_or_else(|| "0:1:0.05".into());
    let omegas = parse_grid(&grid_spec)?;
    let mut rows = Vec::with_capacity(omegas.len());
    for &omega in &omegas {
        rows.push((omega, steady_state(omega, tau)?));
    }
    let omega_c = critical_snr(tau);
    println!("omega_c={omega_c:?}");
    let base = format!("theory_phase_tau{}", f(tau));
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_theory_phase_csv(&out.join(&csv), &rows, omega_c)?;
    let command = vec![
        "theory".to_string(),
        "phase".to_string(),
        "--tau".into(),
        f(tau),
        "--omega-grid".into(),
        grid_spec.clone(),
    ];
    let config = serde_json::json!({ "tau": tau, "omega_grid": grid_spec });
    emit_run_records(out, &base, "theory phase", command, 0, config, vec![csv], &timer)
}

fn run_sweep_lambda0(
    out: &Path,
    sim: &SimFlags,
    values: Option<String>,
    t_eval: Option<f64>,
) -> Result<()> {
    let timer = RunTimer::start();
    let mut base_cfg = ExperimentConfig::desk_default();
    base_cfg.t_max = 40.0;
    let cfg = resolve_experiment(sim, &base_cfg)?;
    let spec = values.unwrap_or_else(|| "0.1,0.25,0.5,1,2,4".into());
    let lambda0s = parse_float_list(&spec, "lambda0")?;
    let t_eval = t_eval.unwrap_or(3.0);
    let sweep = harness::run_lambda0_sweep(&lambda0s, &cfg, t_eval)?;
    let base = format!("sweep_lambda0_{}", cfg.algorithm);
    let points_csv = format!("{}.csv", sanitize_component(&base));
    let theory_csv = format!("{}_theory.csv", sanitize_component(&base));
    output::write_lambda0_csv(&out.join(&points_csv), &sweep)?;
    output::write_lambda0_theory_csv(&out.join(&theory_csv), &sweep)?;
    let extra = vec![
        "--values".to_string(),
        lambda0s.iter().map(|v| f(*v)).collect::<Vec<_>>().join(","),
        "--t-eval".to_string(),
        f(t_eval),
    ];
    let config = serde_json::json!({
        "experiment": serde_json::to_value(&cfg)?,
        "lambda0_values": lambda0s,
        "t_eval": t_eval,
    });
    emit_run_records(
        out,
        &base,
        "sweep lambda0",
        resolved_sim_argv(&["sweep", "lambda0"], &cfg, &extra),
        cfg.seed,
        config,
        vec![points_csv, theory_csv],
        &timer,
    )
}

fn run_sweep_omega(out: &Path, sim: &SimFlags, values: Option<String>) -> Result<()> {
    let timer = RunTimer::start();
    let mut base_cfg = ExperimentConfig::desk_default();
    base_cfg.t_max = 150.0;
    let cfg = resolve_experiment(sim, &base_cfg)?;
    let spec = values.unwrap_or_else(|| "0.05,0.1,0.15,0.2,0.25,0.3,0.4,0.6,0.8,1".into());
    let omegas = parse_float_list(&spec, "omega")?;
    let points = harness::run_phase_sweep(&omegas, &cfg)?;
    let base = format!("sweep_omega_{}", cfg.algorithm);
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_phase_csv(&out.join(&csv), &points)?;
    let extra = vec![
        "--values".to_string(),
        omegas.iter().map(|v| f(*v)).collect::<Vec<_>>().join(","),
    ];
    let config = serde_json::json!({
        "experiment": serde_json::to_value(&cfg)?,
        "omega_values": omegas,
    });
    emit_run_records(
        out,
        &base,
        "sweep omega",
        resolved_sim_argv(&["sweep", "omega"], &cfg, &extra),
        cfg.seed,
        config,
        vec![csv],
        &timer,
    )
}

fn run_switch(out: &Path, sim: &SimFlags) -> Result<()> {
    let timer = RunTimer::start();
    let mut base_cfg = ExperimentConfig::desk_default();
    base_cfg.t_max = 100.0;
    // The switch spec itself is resolved from flags/file; when neither names
    // a switch time the canonical protocol (switch at t=50) applies.
    let mut flags = sim.clone();
    if flags.switch_t.is_none() && load_file_config(flags.config.as_deref())?.switch_t.is_none() {
        flags.switch_t = Some(50.0);
    }
    let cfg = resolve_experiment(&flags, &base_cfg)?;
    let agg = harness::run_nonstationary(&cfg)?;
    let base = format!("switch_{}", cfg.algorithm);
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_aggregate_csv(&out.join(&csv), &agg)?;
    emit_run_records(
        out,
        &base,
        "switch",
        resolved_sim_argv(&["switch"], &cfg, &[]),
        cfg.seed,
        serde_json::to_value(&cfg)?,
        vec![csv],
        &timer,
    )
}

fn run_multipc(
    out: &Path,
    sim: &SimFlags,
    r: Option<usize>,
    omegas: Option<String>,
    matrix: Option<PathBuf>,
) -> Result<()> {
    let timer = RunTimer::start();
    let r = r.unwrap_or(2);
    let mut base_cfg = ExperimentConfig::desk_default();
    base_cfg.p = 512;
    base_cfg.t_max = 10.0;
    base_cfg.trials = 3;
    let mut cfg = resolve_experiment(sim, &base_cfg)?;
    let (source, source_desc) = match &matrix {
        Some(path) => {
            if omegas.is_some() {
                return Err(Error::Config(
                    "--omegas and --matrix are mutually exclusive".into(),
                ));
            }
            let m = harness::ingest_matrix(path)?;
            let file = load_file_config(sim.config.as_deref())?;
            if sim.p.is_none() && file.p.is_none() {
                cfg.p = m.dimension();
            }
            let desc = serde_json::json!({
                "matrix": path.display().to_string(),
                "rows": m.rows(),
                "dimension": m.dimension(),
            });
            (MultiPcSource::Matrix(m), desc)
        }
        None => {
            let strengths = match &omegas {
                Some(s) => parse_float_list(s, "omega")?,
                None => (1..=r).rev().map(|j| j as f64).collect(),
            };
            let desc = serde_json::json!({ "omegas": strengths });
            (MultiPcSource::Synthetic { omegas: strengths }, desc)
        }
    };
    let trace = harness::run_multipc(&cfg, r, &source)?;
    let base = format!("multipc_r{}_{}", r, cfg.algorithm);
    let csv = format!("{}.csv", sanitize_component(&base));
    output::write_multipc_csv(&out.join(&csv), &trace)?;
    let mut extra = vec!["--r".to_string(), r.to_string()];
    match (&matrix, &source) {
        (Some(path), _) => {
            extra.push("--matrix".into());
            extra.push(path.display().to_string());
        }
        (None, MultiPcSource::Synthetic { omegas }) => {
            extra.push("--omegas".into());
            extra.push(omegas.iter().map(|v| f(*v)).collect::<Vec<_>>().join(","));
        }
        _ => unreachable!("matrix flag and source variant are paired"),
    }
    let config = serde_json::json!({
        "experiment": serde_json::to_value(&cfg)?,
        "r": r,
        "source": source_desc,
    });
    emit_run_records(
        out,
        &base,
        "multipc",
        resolved_sim_argv(&["multipc"], &cfg, &extra),
        cfg.seed,
        config,
        vec![csv],
        &timer,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_check_moments(
    out: &Path,
    p: Option<usize>,
    omega: Option<f64>,
    tau: Option<f64>,
    xi: Option<String>,
    init: Option<String>,
    lambda0: Option<f64>,
    resamples: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let timer = RunTimer::start();
    let cfg = MomentCheckConfig {
        p: p.unwrap_or(500),
        omega: omega.unwrap_or(1.0),
        tau: tau.unwrap_or(0.5),
        xi: xi.as_deref().unwrap_or("uniform").parse()?,
        init: init.as_deref().unwrap_or("warm:0.3").parse()?,
        lambda0: lambda0.unwrap_or(1.0),
        n_resamples: resamples.unwrap_or(10_000),
        seed: seed.unwrap_or(1234),
    };
    let report = harness::moment_oracle_check(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let base = format!("check_moments_p{}", cfg.p);
    let json = format!("{}.report.json", sanitize_component(&base));
    output::write_moment_report(&out.join(&json), &report)?;
    let command = vec![
        "check".to_string(),
        "moments".to_string(),
        "--p".into(),
        cfg.p.to_string(),
        "--omega".into(),
        f(cfg.omega),
        "--tau".into(),
        f(cfg.tau),
        "--xi".into(),
        cfg.xi.to_string(),
        "--init".into(),
        cfg.init.to_string(),
        "--lambda0".into(),
        f(cfg.lambda0),
        "--resamples".into(),
        cfg.n_resamples.to_string(),
        "--seed".into(),
        cfg.seed.to_string(),
    ];
    emit_run_records(
        out,
        &base,
        "check moments",
        command,
        cfg.seed,
        serde_json::to_value(&cfg)?,
        vec![json],
        &timer,
    )
}

// ---------------------------------------------------------------------------
// Reproduction presets
// ---------------------------------------------------------------------------

struct PresetScale {
    p: usize,
    trials: usize,
}

fn preset_scale(paper: bool, desk_p: usize, desk_trials: usize) -> PresetScale {
    if paper {
        PresetScale { p: harness::PAPER_SCALE_P, trials: harness::PAPER_SCALE_TRIALS }
    } else {
        PresetScale { p: desk_p, trials: desk_trials }
    }
}

fn run_reproduce(out: &Path, figure: Figure, paper_scale: bool, seed: Option<u64>) -> Result<()> {
    let timer = RunTimer::start();
    let seed = seed.unwrap_or(1234);
    let name = figure.name();
    let mut outputs: Vec<String> = Vec::new();
    let push_csv = |base: String| format!("{}.csv", sanitize_component(&base));

    let desk = ExperimentConfig { seed, ..ExperimentConfig::desk_default() };
    let config_echo: serde_json::Value;

    match figure {
        Figure::Fig1 => {
            let scale = preset_scale(paper_scale, 4000, 5);
            let cfg = ExperimentConfig {
                p: scale.p,
                trials: scale.trials,
                t_max: 10.0,
                ..desk
            };
            let times = [2.0, 5.0, 10.0];
            let study = harness::run_density_experiment(&cfg, &times, DEFAULT_BINS)?;
            let comparison = push_csv(format!("{name}_comparison"));
            let l1 = push_csv(format!("{name}_l1"));
            let pde = push_csv(format!("{name}_pde"));
            output::write_density_comparison_csv(&out.join(&comparison), &study)?;
            output::write_density_l1_csv(&out.join(&l1), &study)?;
            output::write_pde_csv(&out.join(&pde), &study.pde)?;
            for cmp in &study.comparisons {
                println!(
                    "t={} l1_raw={} l1_rescaled={}",
                    f(cmp.t),
                    f(cmp.l1_raw),
                    f(cmp.l1_rescaled)
                );
            }
            outputs.extend([comparison, l1, pde]);
            config_echo = serde_json::json!({
                "experiment": serde_json::to_value(&cfg)?,
                "snapshots": times,
                "bins": DEFAULT_BINS,
            });
        }
        Figure::Fig2 => {
            let scale = preset_scale(paper_scale, harness::DESK_SCALE_P, harness::DESK_SCALE_TRIALS);
            let cfg = ExperimentConfig { p: scale.p, trials: scale.trials, ..desk };
            let mut agg = harness::run_monte_carlo(&cfg)?;
            harness::attach_theory(&mut agg, &cfg)?;
            let csv = push_csv(format!("{name}_trajectory"));
            output::write_aggregate_csv(&out.join(&csv), &agg)?;
            outputs.push(csv);
            config_echo = serde_json::to_value(&cfg)?;
        }
        Figure::Fig4 => {
            let tau = 0.5;
            let omegas_theory = parse_grid("0:1:0.01")?;
            let mut rows = Vec::with_capacity(omegas_theory.len());
            for &omega in &omegas_theory {
                rows.push((omega, steady_state(omega, tau)?));
            }
            let theory_csv = push_csv(format!("{name}_theory"));
            output::write_theory_phase_csv(&out.join(&theory_csv), &rows, critical_snr(tau))?;

            let scale = preset_scale(paper_scale, harness::DESK_SCALE_P, harness::DESK_SCALE_TRIALS);
            let cfg = ExperimentConfig {
                p: scale.p,
                trials: scale.trials,
                t_max: 150.0,
                ..desk
            };
            let omegas_emp = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.6, 0.8, 1.0];
            let points = harness::run_phase_sweep(&omegas_emp, &cfg)?;
            let emp_csv = push_csv(format!("{name}_empirical"));
            output::write_phase_csv(&out.join(&emp_csv), &points)?;
            outputs.extend([theory_csv, emp_csv]);
            config_echo = serde_json::json!({
                "experiment": serde_json::to_value(&cfg)?,
                "omega_values": omegas_emp,
                "theory_grid": "0:1:0.01",
            });
        }
        Figure::Fig5 => {
            let scale = preset_scale(paper_scale, harness::DESK_SCALE_P, harness::DESK_SCALE_TRIALS);
            let rates: [(String, AlgorithmSpec); 4] = [
                ("adaptive".into(), AlgorithmSpec::AdaptiveIno),
                ("ino-0.1".into(), AlgorithmSpec::Ino { tau: 0.1 }),
                ("ino-0.5".into(), AlgorithmSpec::Ino { tau: 0.5 }),
                ("ino-1.0".into(), AlgorithmSpec::Ino { tau: 1.0 }),
            ];
            let mut cfg_echo = Vec::new();
            for (label, algorithm) in rates {
                let cfg = ExperimentConfig {
                    p: scale.p,
                    trials: scale.trials,
                    algorithm,
                    t_max: 20.0,
                    ..desk.clone()
                };
                let mut agg = harness::run_monte_carlo(&cfg)?;
                harness::attach_theory(&mut agg, &cfg)?;
                let csv = push_csv(format!("{name}_{label}"));
                output::write_aggregate_csv(&out.join(&csv), &agg)?;
                outputs.push(csv);
                cfg_echo.push(serde_json::to_value(&cfg)?);
            }
            config_echo = serde_json::json!({ "runs": cfg_echo });
        }
        Figure::Fig6 => {
            let scale = preset_scale(paper_scale, harness::DESK_SCALE_P, harness::DESK_SCALE_TRIALS);
            let cfg = ExperimentConfig {
                p: scale.p,
                trials: scale.trials,
                init: InitKind::Warm { c: 0.2 },
                t_max: 40.0,
                ..desk
            };
            let lambda0s = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
            let t_eval = 3.0;
            let sweep = harness::run_lambda0_sweep(&lambda0s, &cfg, t_eval)?;
            let points_csv = push_csv(format!("{name}_sweep"));
            let theory_csv = push_csv(format!("{name}_theory"));
            output::write_lambda0_csv(&out.join(&points_csv), &sweep)?;
            output::write_lambda0_theory_csv(&out.join(&theory_csv), &sweep)?;
            outputs.extend([points_csv, theory_csv]);
            config_echo = serde_json::json!({
                "experiment": serde_json::to_value(&cfg)?,
                "lambda0_values": lambda0s,
                "t_eval": t_eval,
            });
        }
        Figure::Fig7 => {
            let scale = preset_scale(paper_scale, harness::DESK_SCALE_P, harness::DESK_SCALE_TRIALS);
            let algos = [
                AlgorithmSpec::AdaptiveIno,
                AlgorithmSpec::Ccipca { amnesia: 4.0 },
                AlgorithmSpec::AdaOja { b0: 1.0 },
            ];
            let mut cfg_echo = Vec::new();
            for algorithm in algos {
                let cfg = ExperimentConfig {
                    p: scale.p,
                    trials: scale.trials,
                    algorithm,
                    t_max: 100.0,
                    switch: Some(SwitchSpec {
                        t_switch: 50.0,
                        xi2: SignalKind::SparseMixture { rho: 0.05 },
                    }),
                    ..desk.clone()
                };
                let agg = harness::run_nonstationary(&cfg)?;
                let csv = push_csv(format!("{name}_{algorithm}"));
                output::write_aggregate_csv(&out.join(&csv), &agg)?;
                outputs.push(csv);
                cfg_echo.push(serde_json::to_value(&cfg)?);
            }
            config_echo = serde_json::json!({ "runs": cfg_echo });
        }
    }

    let mut command = vec!["reproduce".to_string(), name.to_string()];
    if paper_scale {
        command.push("--paper-scale".into());
    }
    command.extend(["--seed".into(), seed.to_string()]);
    emit_run_records(out, name, "reproduce", command, seed, config_echo, outputs, &timer)
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

fn configure_threads(explicit: Option<usize>) -> Result<()> {
    let n = match explicit {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(text) => Some(text.trim().parse::<usize>().map_err(|_| {
                Error::Config(format!("cannot parse {THREADS_ENV}='{text}' as a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        // The pool can only be installed once per process; a later identical
        // request is harmless, so only a genuine failure is worth a warning.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("global thread pool was already initialized; --threads ignored");
        }
    }
    Ok(())
}

/// Executes a parsed invocation.
pub fn execute(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate { sim, theory } => run_simulate(out, &sim, theory),
        Command::Theory { cmd } => match cmd {
            TheoryCmd::Ode { omega, tau, adaptive, q0, lambda0, t_max, dt } => {
                run_theory_ode(out, omega, tau, adaptive, q0, lambda0, t_max, dt)
            }
            TheoryCmd::Pde {
                omega,
                tau,
                xi,
                init,
                lambda0,
                snapshots,
                grid_points,
                half_width,
                dt,
                moment_source,
                q0,
            } => run_theory_pde(
                out,
                omega,
                tau,
                xi,
                init,
                lambda0,
                snapshots,
                grid_points,
                half_width,
                dt,
                moment_source,
                q0,
            ),
            TheoryCmd::Steady { omega, tau } => run_theory_steady(out, omega, tau),
            TheoryCmd::Phase { tau, omega_grid } => run_theory_phase(out, tau, omega_grid),
        },
        Command::Sweep { cmd } => match cmd {
            SweepCmd::Lambda0 { sim, values, t_eval } => {
                run_sweep_lambda0(out, &sim, values, t_eval)
            }
            SweepCmd::Omega { sim, values } => run_sweep_omega(out, &sim, values),
        },
        Command::Switch { sim } => run_switch(out, &sim),
        Command::Multipc { sim, r, omegas, matrix } => {
            run_multipc(out, &sim, r, omegas, matrix)
        }
        Command::Check { cmd } => match cmd {
            CheckCmd::Moments { p, omega, tau, xi, init, lambda0, resamples, seed } => {
                run_check_moments(out, p, omega, tau, xi, init, lambda0, resamples, seed)
            }
        },
        Command::Reproduce { figure, paper_scale, seed } => {
            run_reproduce(out, figure, paper_scale, seed)
        }
    }
}

/// Parses the given argv and runs it, returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `std::env::args_os()` and runs it.
pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_internally_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn grid_parser_is_inclusive_of_both_ends() {
        let grid = parse_grid("0:1:0.05").unwrap();
        assert_eq!(grid.len(), 21);
        assert_eq!(grid[0], 0.0);
        assert!((grid[20] - 1.0).abs() < 1e-12);
        assert!((grid[1] - 0.05).abs() < 1e-12);

        let single = parse_grid("0.5:0.5:1").unwrap();
        assert_eq!(single, vec![0.5]);

        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:1:0.1").is_err());
    }

    #[test]
    fn float_list_parser_reports_bad_entries() {
        assert_eq!(parse_float_list("1,2.5, 3", "x").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_float_list("1,,2", "x").is_err());
        assert!(parse_float_list("1,two", "x").is_err());
    }

    #[test]
    fn defaults_match_the_desk_scale_experiment() {
        let cfg = resolve_experiment(&SimFlags::default(), &ExperimentConfig::desk_default())
            .unwrap();
        assert_eq!(cfg.p, 2000);
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.seed, 1234);
        assert!(matches!(cfg.algorithm, AlgorithmSpec::Ino { tau } if tau == 0.5));
        assert!(matches!(cfg.init, InitKind::Warm { c } if c == 0.1));
        assert!(matches!(cfg.xi, SignalKind::UniformSym));
        assert!(cfg.switch.is_none());
    }

    #[test]
    fn cli_flags_override_file_which_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "p = 300\nomega = 2.0\nalgo = \"oja\"\ntau = 0.25\nseed = 9\n",
        )
        .unwrap();
        let flags = SimFlags {
            config: Some(path),
            omega: Some(0.5),
            ..SimFlags::default()
        };
        let cfg = resolve_experiment(&flags, &ExperimentConfig::desk_default()).unwrap();
        assert_eq!(cfg.p, 300, "file value applies");
        assert_eq!(cfg.omega, 0.5, "CLI flag beats the file");
        assert_eq!(cfg.seed, 9);
        assert!(
            matches!(cfg.algorithm, AlgorithmSpec::Oja { tau } if tau == 0.25),
            "file algo picks up the file tau as its default rate"
        );
        assert_eq!(cfg.trials, 10, "untouched values stay at defaults");
    }

    #[test]
    fn unknown_config_keys_are_rejected_with_the_file_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("typo.toml");
        std::fs::write(&path, "lamda0 = 1.0\n").unwrap();
        let flags = SimFlags { config: Some(path.clone()), ..SimFlags::default() };
        let err = resolve_experiment(&flags, &ExperimentConfig::desk_default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("typo.toml"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn xi2_without_switch_time_is_rejected() {
        let flags = SimFlags { xi2: Some("sparse:0.1".into()), ..SimFlags::default() };
        assert!(resolve_experiment(&flags, &ExperimentConfig::desk_default()).is_err());
    }

    #[test]
    fn switch_flags_resolve_into_the_switch_spec() {
        let flags = SimFlags {
            switch_t: Some(5.0),
            xi2: Some("expshift:0.9".into()),
            t_max: Some(10.0),
            ..SimFlags::default()
        };
        let cfg = resolve_experiment(&flags, &ExperimentConfig::desk_default()).unwrap();
        let sw = cfg.switch.unwrap();
        assert_eq!(sw.t_switch, 5.0);
        assert!(matches!(sw.xi2, SignalKind::ExpShift { bias } if bias == 0.9));
    }

    #[test]
    fn resolved_argv_round_trips_to_the_same_config() {
        let flags = SimFlags {
            p: Some(150),
            algo: Some("krasulina:0.3".into()),
            xi: Some("sparse:0.2".into()),
            init: Some("warm:0.25".into()),
            t_max: Some(4.0),
            trials: Some(2),
            seed: Some(77),
            switch_t: Some(2.0),
            ..SimFlags::default()
        };
        let cfg = resolve_experiment(&flags, &ExperimentConfig::desk_default()).unwrap();
        let argv = resolved_sim_argv(&["simulate"], &cfg, &[]);
        let mut full = vec!["ino-pca".to_string()];
        full.extend(argv);
        let reparsed = Cli::try_parse_from(&full).unwrap();
        match reparsed.command {
            Command::Simulate { sim, theory } => {
                assert!(!theory);
                let cfg2 = resolve_experiment(&sim, &ExperimentConfig::desk_default()).unwrap();
                assert_eq!(
                    serde_json::to_value(&cfg).unwrap(),
                    serde_json::to_value(&cfg2).unwrap(),
                    "manifest argv must reproduce the identical resolved config"
                );
            }
            other => panic!("expected simulate, parsed {other:?}"),
        }
    }

    #[test]
    fn steady_line_matches_the_pinned_format() {
        let s = steady_state(1.0, 0.5).unwrap();
        assert_eq!(steady_line(&s), "branch=learning Q_s=0.881917 lambda_s=2.0");
        let u = steady_state(0.1, 0.5).unwrap();
        assert_eq!(
            steady_line(&u),
            "branch=unstable Q_s=0.000000 lambda_s=1.2071067811865475"
        );
    }

    #[test]
    fn thread_count_must_be_positive() {
        assert!(configure_threads(Some(0)).is_err());
    }

    #[test]
    fn parses_the_documented_invocations() {
        for argv in [
            vec!["ino-pca", "simulate", "--algo", "ino:0.5", "--p", "100", "--t-max", "1", "--trials", "2", "--seed", "7"],
            vec!["ino-pca", "theory", "steady", "--omega", "1", "--tau", "0.5"],
            vec!["ino-pca", "theory", "phase", "--tau", "0.5", "--omega-grid", "0:1:0.05"],
            vec!["ino-pca", "theory", "ode", "--adaptive", "--t-max", "20"],
            vec!["ino-pca", "theory", "pde", "--snapshots", "2,5,10"],
            vec!["ino-pca", "sweep", "lambda0", "--values", "0.5,1", "--t-eval", "3"],
            vec!["ino-pca", "sweep", "omega", "--values", "0.15,0.3"],
            vec!["ino-pca", "switch", "--switch-t", "50", "--xi2", "sparse:0.05"],
            vec!["ino-pca", "multipc", "--r", "2", "--omegas", "2,1"],
            vec!["ino-pca", "check", "moments", "--p", "500"],
            vec!["ino-pca", "reproduce", "fig2", "--paper-scale"],
            vec!["ino-pca", "--threads", "2", "--out", "artifacts", "reproduce", "fig6"],
        ] {
            if let Err(e) = Cli::try_parse_from(&argv) {
                panic!("failed to parse {argv:?}: {e}");
            }
        }
    }

    #[test]
    fn unknown_flags_fail_to_parse() {
        assert!(Cli::try_parse_from(["ino-pca", "simulate", "--bogus", "1"]).is_err());
        assert!(Cli::try_parse_from(["ino-pca", "reproduce", "fig3"]).is_err());
        assert!(Cli::try_parse_from(["ino-pca"]).is_err());
    }

    #[test]
    fn help_text_documents_defaults_for_every_experiment_flag() {
        let top_help = Cli::command().render_long_help().to_string();
        for needle in ["--threads", "--out", "INO_PCA_THREADS", "[default: out]"] {
            assert!(top_help.contains(needle), "top-level help lacks {needle}\n{top_help}");
        }
        let sim_help = {
            let mut cmd = Cli::command();
            cmd.build();
            let mut sim = cmd.find_subcommand("simulate").unwrap().clone();
            sim.render_long_help().to_string()
        };
        for needle in [
            "--p", "--omega", "--tau", "--algo", "--xi", "--init", "--lambda0",
            "--t-max", "--trials", "--seed", "--sample-every", "--switch-t",
            "--xi2", "--config",
        ] {
            assert!(sim_help.contains(needle), "simulate help lacks {needle}\n{sim_help}");
        }
        for needle in [
            "[default: 2000]",
            "[default: 1.0]",
            "[default: 0.5]",
            "[default: ino]",
            "[default: uniform]",
            "[default: warm:0.1]",
            "[default: 10]",
            "[default: 1234]",
            "[default: 0.1]",
        ] {
            assert!(sim_help.contains(needle), "simulate help lacks {needle}\n{sim_help}");
        }
    }
}
