//! Finite-volume solver for the mean-field transport equation obeyed by the
//! coordinate density of the streaming estimate in the high-dimensional limit.
//!
//! As the ambient dimension grows with time rescaled as `t = k/p`, the joint
//! empirical measure of (estimate coordinate, signal coordinate) pairs
//! concentrates on a deterministic flow: conditioned on the signal coordinate
//! value `ξ`, the estimate coordinate density `P_t(x|ξ)` solves a nonlinear
//! Fokker–Planck equation
//!
//! ```text
//!   ∂P/∂t = −∂/∂x [ G(x, λ_t, ξ, Q_t) P ] + (J(Q_t)/2) ∂²P/∂x²
//! ```
//!
//! with drift and diffusion coefficients
//!
//! ```text
//!   G(x, λ, ξ, Q) = τ (ωQξ + x/λ − x),    J(Q) = τ² (ωQ² + 1).
//! ```
//!
//! The equation is nonlinear because the order parameters feed back through
//! moments of the solution itself:
//!
//! ```text
//!   λ_t = sqrt( Σ_a w_a ∫ x² P_t(x|ξ_a) dx ),
//!   Q_t = Σ_a w_a ∫ (x ξ_a / λ_t) P_t(x|ξ_a) dx,
//! ```
//!
//! where `(ξ_a, w_a)` are the atoms of the signal-coordinate distribution
//! (continuous distributions are quantized into equal-weight quantile atoms by
//! [`SignalAtoms::from_signal`]). Closing the loop this way is the
//! [`MomentSource::SelfConsistent`] mode; [`MomentSource::OdeDriven`] instead
//! reads `(Q_t, λ_t)` from an independently integrated
//! [`TheoryTrajectory`](crate::theory_ode::TheoryTrajectory), which makes the
//! two routes mutual cross-checks of the same scaling limit.
//!
//! # Discretization
//!
//! Space is divided into `N` uniform cells on `[−L, L]` with unknowns at the
//! cell centers. Cell-face fluxes use exponential fitting (the
//! Scharfetter–Gummel / Chang–Cooper construction): with `D = J/2`,
//! `w = G Δx / D` evaluated at the face, the flux between cells `i` and `i+1`
//! is
//!
//! ```text
//!   F = (D/Δx) [ B(−w) P_i − B(w) P_{i+1} ],    B(z) = z / (eᶻ − 1).
//! ```
//!
//! This flux is exact for the locally constant-coefficient two-point boundary
//! problem, second-order accurate in `Δx` for smooth densities, positivity
//! preserving under the explicit-Euler step-size restriction used here, and —
//! decisive for this module — it reproduces the drift–diffusion balance of the
//! steady state without the first-order numerical diffusion a plain upwind
//! flux would add. Boundary faces carry zero flux, so the midpoint-rule mass
//! of every conditional is conserved exactly (up to round-off) and the
//! reflecting boundary never leaks probability.
//!
//! Time stepping is explicit Euler with the harmonically combined stability
//! bound `dt = 0.9 / (J/Δx² + 2·max|G|/Δx)`, which is at least as strict as
//! the separate advective (`Δx/max|G|`) and diffusive (`Δx²/J`) limits, and is
//! additionally capped by the configured `dt`.
//!
//! The long-time attractor admits a closed form: for steady order parameters
//! `(Q_s, λ_s)` the conditional density is the Gibbs profile
//!
//! ```text
//!   P_s(x|ξ) ∝ exp( (τ/J(Q_s)) (2ωQ_sξx + x²/λ_s − x²) ),
//! ```
//!
//! a Gaussian with mean `ωQ_sξλ_s/(λ_s−1)` and variance `J λ_s/(2τ(λ_s−1))`;
//! it is integrable because `λ_s > 1` on both steady branches. See
//! [`steady_density`].

use crate::error::{Error, Result};
use crate::linalg::trapezoid;
use crate::spiked_model::{InitKind, SignalKind};
use crate::theory_ode::{steady_state, TheoryTrajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default number of spatial cells.
pub const DEFAULT_GRID_POINTS: usize = 1024;

/// Minimum admissible number of spatial cells.
pub const MIN_GRID_POINTS: usize = 64;

/// Default cap on the explicit time step (the stability bound may force a
/// smaller step; the cap only ever shrinks it further).
pub const DEFAULT_PDE_DT: f64 = 1e-3;

/// Default number of quantile atoms used to discretize a continuous
/// signal-coordinate distribution.
pub const DEFAULT_ATOM_COUNT: usize = 64;

/// Maximum tolerated drift of any conditional's trapezoid mass per unit time.
pub const MASS_DRIFT_TOL: f64 = 1e-4;

/// Most negative admissible density value (scheme-level positivity slack).
pub const NEGATIVE_DENSITY_TOL: f64 = -1e-8;

/// Safety factor applied to the explicit-Euler stability bound.
const CFL_SAFETY: f64 = 0.9;

/// Drift coefficient `G(x, λ, ξ, Q) = τ(ωQξ + x/λ − x)` of the limiting
/// transport equation. Requires `λ > 0`.
pub fn drift_coefficient(x: f64, lambda: f64, xi: f64, q: f64, omega: f64, tau: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "drift coefficient requires a positive norm parameter, got lambda = {lambda}"
        )));
    }
    Ok(tau * (omega * q * xi + x / lambda - x))
}

/// Diffusion coefficient `J(Q) = τ²(ωQ² + 1)` of the limiting transport
/// equation. The second-derivative term of the equation carries `J/2`.
pub fn diffusion_coefficient(q: f64, omega: f64, tau: f64) -> f64 {
    tau * tau * (omega * q * q + 1.0)
}

/// Where the order parameters `(Q_t, λ_t)` driving the drift and diffusion
/// coefficients come from during evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    /// Recompute `(Q_t, λ_t)` from moments of the evolving density at every
    /// step (the genuinely nonlinear equation).
    SelfConsistent,
    /// Interpolate `(Q_t, λ_t)` from an independently integrated moment
    /// trajectory, turning the equation into a linear one with prescribed
    /// time-dependent coefficients.
    OdeDriven,
}

impl std::fmt::Display for MomentSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MomentSource::SelfConsistent => write!(f, "self-consistent"),
            MomentSource::OdeDriven => write!(f, "ode-driven"),
        }
    }
}

impl std::str::FromStr for MomentSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self-consistent" => Ok(MomentSource::SelfConsistent),
            "ode-driven" => Ok(MomentSource::OdeDriven),
            other => Err(Error::Config(format!(
                "unknown moment source '{other}' (expected 'self-consistent' or 'ode-driven')"
            ))),
        }
    }
}

/// Spatial grid, time-step cap, model parameters, and moment-source mode for
/// one solver run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PdeConfig {
    /// Number of spatial cells `N`.
    pub grid_points: usize,
    /// Half-width `L` of the spatial domain `[−L, L]`.
    pub half_width: f64,
    /// Cap on the explicit time step (stability may force smaller steps).
    pub dt: f64,
    /// Signal-to-noise ratio `ω`.
    pub omega: f64,
    /// Learning rate `τ`.
    pub tau: f64,
    /// Order-parameter source.
    pub moment_source: MomentSource,
}

impl PdeConfig {
    /// Domain half-width large enough that the boundary density is negligible
    /// for the given model scale: `6·max(1, ω+1, λ₀, max|ξ_a|·ω)`.
    pub fn default_half_width(omega: f64, lambda0: f64, atoms: &SignalAtoms) -> f64 {
        let xi_max = atoms
            .values()
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        6.0 * 1.0f64.max(omega + 1.0).max(lambda0).max(xi_max * omega)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < MIN_GRID_POINTS {
            return Err(Error::Config(format!(
                "grid must have at least {MIN_GRID_POINTS} cells, got {}",
                self.grid_points
            )));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::Config(format!(
                "domain half-width must be positive and finite, got {}",
                self.half_width
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "time-step cap must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::Config(format!(
                "signal-to-noise ratio must be nonnegative and finite, got {}",
                self.omega
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Atomic (discrete) representation of the signal-coordinate distribution:
/// values `ξ_a` with weights `w_a ≥ 0`, `Σ w_a = 1`, normalized so that
/// `Σ w_a ξ_a² = 1` (mirroring the exact `‖ξ‖ = √p` normalization of sampled
/// signal vectors).
#[derive(Clone, Debug, Serialize)]
pub struct SignalAtoms {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl SignalAtoms {
    /// Builds an atom list from explicit values and weights, validating the
    /// weight simplex and the unit second moment.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::Config(format!(
                "atom list needs matching nonempty values/weights, got {} values and {} weights",
                values.len(),
                weights.len()
            )));
        }
        if values.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("atom values and weights must be finite".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("atom weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "atom weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        let m2: f64 = values.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
        if (m2 - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "atom second moment must be 1 within 1e-9, got {m2}"
            )));
        }
        Ok(SignalAtoms { values, weights })
    }

    /// Single atom at `ξ = ±1` (the only point masses with unit second
    /// moment).
    pub fn point_mass(xi: f64) -> Result<Self> {
        SignalAtoms::new(vec![xi], vec![1.0])
    }

    /// Discretizes a signal-coordinate distribution into atoms. Distributions
    /// that are already atomic use their exact atoms; continuous ones are
    /// quantized into `count` equal-weight atoms at the midpoint quantiles
    /// `(i + 1/2)/count`, then rescaled so the atomic second moment is exactly
    /// one (midpoint quantization slightly shrinks it otherwise).
    pub fn from_signal(kind: &SignalKind, count: usize) -> Result<Self> {
        kind.validate()?;
        if let Some(atoms) = kind.exact_atoms() {
            let (values, weights) = atoms.into_iter().unzip();
            return SignalAtoms::new(values, weights);
        }
        if count == 0 {
            return Err(Error::Config(
                "quantizing a continuous signal distribution needs at least one atom".into(),
            ));
        }
        let mut values: Vec<f64> = (0..count)
            .map(|i| kind.quantile((i as f64 + 0.5) / count as f64))
            .collect();
        let weights = vec![1.0 / count as f64; count];
        let m2: f64 = values
            .iter()
            .zip(&weights)
            .map(|(v, w)| w * v * v)
            .sum();
        if !(m2 > 0.0) {
            return Err(Error::Config(
                "quantile atoms have zero second moment; increase the atom count".into(),
            ));
        }
        let scale = m2.sqrt();
        for v in &mut values {
            *v /= scale;
        }
        SignalAtoms::new(values, weights)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The discretized solution state: a uniform cell-center grid, the signal
/// atoms, and one conditional density array per atom.
#[derive(Clone, Debug)]
pub struct DensityField {
    x_grid: Vec<f64>,
    dx: f64,
    atoms: SignalAtoms,
    cond: Vec<Vec<f64>>,
    t: f64,
}

impl DensityField {
    /// Cell-center coordinates (uniform spacing, symmetric about zero).
    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn atoms(&self) -> &SignalAtoms {
        &self.atoms
    }

    /// Conditional density `P_t(·|ξ_a)` for atom index `a`.
    pub fn conditional(&self, a: usize) -> &[f64] {
        &self.cond[a]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Atom-weighted mixture density `P_t(x) = Σ_a w_a P_t(x|ξ_a)`.
    pub fn marginal_density(&self) -> Vec<f64> {
        let n = self.x_grid.len();
        let mut out = vec![0.0; n];
        for (p, &w) in self.cond.iter().zip(self.atoms.weights()) {
            for (o, &v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        out
    }

    /// Density of the norm-rescaled coordinate `x/λ`, evaluated on the same
    /// grid: `λ·P_t(λx)` by linear interpolation (zero outside the grid).
    /// Mass is preserved up to interpolation error when `λ ≥ 1`; for `λ < 1`
    /// the rescaled support extends beyond the grid and the visible mass
    /// shrinks accordingly.
    pub fn rescaled_marginal(&self, lambda: f64) -> Result<Vec<f64>> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "rescaled marginal requires a positive finite norm parameter, got {lambda}"
            )));
        }
        let marg = self.marginal_density();
        let n = self.x_grid.len();
        let x0 = self.x_grid[0];
        let out = self
            .x_grid
            .iter()
            .map(|&x| {
                let s = (lambda * x - x0) / self.dx;
                if s < 0.0 || s > (n - 1) as f64 {
                    return 0.0;
                }
                let i = (s.floor() as usize).min(n - 2);
                let frac = s - i as f64;
                lambda * (marg[i] * (1.0 - frac) + marg[i + 1] * frac)
            })
            .collect();
        Ok(out)
    }

    /// Atom-weighted integrals `Σ_a w_a ∫ f(x, ξ_a) P(x|ξ_a) dx` by the
    /// midpoint rule (exactly the quadrature the finite-volume scheme
    /// conserves).
    fn mixture_moment(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
        let partials: Vec<f64> = self
            .cond
            .par_iter()
            .zip(self.atoms.values().par_iter())
            .map(|(p, &xi)| {
                let mut acc = 0.0;
                for (&x, &pv) in self.x_grid.iter().zip(p) {
                    acc += f(x, xi) * pv;
                }
                acc * self.dx
            })
            .collect();
        partials
            .iter()
            .zip(self.atoms.weights())
            .map(|(m, &w)| w * m)
            .sum()
    }

    /// Verifies the structural invariants: nonnegative weights summing to one
    /// within 1e-12, and every conditional nonnegative (within the scheme
    /// slack) with trapezoid mass `1 ± 1e-6`. The mass bound presumes the
    /// domain was sized so boundary densities are negligible (see
    /// [`PdeConfig::default_half_width`]).
    pub fn check_invariants(&self) -> Result<()> {
        let total: f64 = self.atoms.weights().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::PdeInstability(format!(
                "atom weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        for (a, p) in self.cond.iter().enumerate() {
            let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < NEGATIVE_DENSITY_TOL {
                return Err(Error::PdeInstability(format!(
                    "conditional {a} dips to {min} at t = {}, below the {NEGATIVE_DENSITY_TOL} tolerance",
                    self.t
                )));
            }
            let mass = trapezoid(&self.x_grid, p);
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::PdeInstability(format!(
                    "conditional {a} has trapezoid mass {mass} at t = {}, expected 1 within 1e-6",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

/// Explicit finite-volume integrator for the limiting transport equation.
///
/// Construct with [`PdeSolver::new`], then call [`PdeSolver::advance_to`] with
/// increasing targets; the solver lands on each target time exactly. Order
/// parameters are readable at any time via [`PdeSolver::q`] and
/// [`PdeSolver::lambda`].
pub struct PdeSolver {
    config: PdeConfig,
    field: DensityField,
    q: f64,
    lambda: f64,
    ode: Option<TheoryTrajectory>,
    flux: Vec<Vec<f64>>,
    mass_ref: Vec<f64>,
    mass_ref_t: f64,
}

impl PdeSolver {
    /// Sets up the initial condition matching the finite-`p` estimator
    /// initialization: conditional Gaussians with mean `cλ₀ξ_a` and variance
    /// `(1−c²)λ₀²` for a warm start with overlap `c`, or mean `0` and variance
    /// `λ₀²` for a cold start. Each conditional is normalized to unit midpoint
    /// mass on the grid.
    ///
    /// `ode` must be provided exactly when the configured moment source is
    /// [`MomentSource::OdeDriven`].
    pub fn new(
        config: PdeConfig,
        atoms: SignalAtoms,
        init: InitKind,
        lambda0: f64,
        ode: Option<TheoryTrajectory>,
    ) -> Result<Self> {
        config.validate()?;
        init.validate()?;
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(Error::Config(format!(
                "initial norm parameter must be positive and finite, got {lambda0}"
            )));
        }
        match (config.moment_source, ode.is_some()) {
            (MomentSource::OdeDriven, false) => {
                return Err(Error::Config(
                    "ode-driven moment source requires a moment trajectory".into(),
                ))
            }
            (MomentSource::SelfConsistent, true) => {
                return Err(Error::Config(
                    "self-consistent moment source does not accept a moment trajectory".into(),
                ))
            }
            _ => {}
        }

        let n = config.grid_points;
        let dx = 2.0 * config.half_width / n as f64;
        let x_grid: Vec<f64> = (0..n)
            .map(|j| -config.half_width + (j as f64 + 0.5) * dx)
            .collect();

        let (mean_scale, var) = match init {
            InitKind::Warm { c } => (c * lambda0, (1.0 - c * c) * lambda0 * lambda0),
            InitKind::Cold => (0.0, lambda0 * lambda0),
        };
        let cond: Vec<Vec<f64>> = atoms
            .values()
            .iter()
            .map(|&xi| {
                let mu = mean_scale * xi;
                let mut p: Vec<f64> = x_grid
                    .iter()
                    .map(|&x| (-(x - mu) * (x - mu) / (2.0 * var)).exp())
                    .collect();
                let mass: f64 = p.iter().sum::<f64>() * dx;
                for v in &mut p {
                    *v /= mass;
                }
                p
            })
            .collect();

        let flux = vec![vec![0.0; n - 1]; atoms.len()];
        let field = DensityField {
            x_grid,
            dx,
            atoms,
            cond,
            t: 0.0,
        };
        let mut solver = PdeSolver {
            config,
            field,
            q: 0.0,
            lambda: lambda0,
            ode,
            flux,
            mass_ref: Vec::new(),
            mass_ref_t: 0.0,
        };
        solver.refresh_moments();
        solver.mass_ref = solver.conditional_masses();
        solver.mass_ref_t = 0.0;
        Ok(solver)
    }

    pub fn config(&self) -> &PdeConfig {
        &self.config
    }

    pub fn field(&self) -> &DensityField {
        &self.field
    }

    pub fn t(&self) -> f64 {
        self.field.t
    }

    /// Current alignment order parameter `Q_t`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Current norm order parameter `λ_t`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn conditional_masses(&self) -> Vec<f64> {
        self.field
            .cond
            .iter()
            .map(|p| trapezoid(&self.field.x_grid, p))
            .collect()
    }

    fn refresh_moments(&mut self) {
        match self.config.moment_source {
            MomentSource::SelfConsistent => {
                let m2 = self.field.mixture_moment(|x, _| x * x);
                let lambda = m2.max(0.0).sqrt();
                let cross = self.field.mixture_moment(|x, xi| x * xi);
                self.lambda = lambda;
                self.q = if lambda > 0.0 { cross / lambda } else { 0.0 };
            }
            MomentSource::OdeDriven => {
                let traj = self.ode.as_ref().expect("checked at construction");
                self.q = traj.q_at(self.field.t);
                self.lambda = traj.lambda_at(self.field.t);
            }
        }
    }

    /// One explicit step of at most `dt_max`, returning the step actually
    /// taken. Refreshes the order parameters, applies the exponentially fitted
    /// fluxes, and runs the mass-drift and positivity guards.
    fn step(&mut self, dt_max: f64) -> Result<f64> {
        self.refresh_moments();
        if !(self.lambda > 0.0) || !self.lambda.is_finite() || !self.q.is_finite() {
            return Err(Error::PdeInstability(format!(
                "order parameters degenerated at t = {}: Q = {}, lambda = {}",
                self.field.t, self.q, self.lambda
            )));
        }

        let (omega, tau) = (self.config.omega, self.config.tau);
        let j = diffusion_coefficient(self.q, omega, tau);
        let d = j / 2.0;
        let dx = self.field.dx;
        let n = self.field.x_grid.len();
        let half = self.config.half_width;

        // The drift is linear in x at fixed (λ, ξ_a, Q), so its maximum
        // modulus over the face range is attained at the outermost faces.
        let drift_at = |x: f64, xi: f64| tau * (omega * self.q * xi + x / self.lambda - x);
        let g_max = self
            .field
            .atoms
            .values()
            .iter()
            .map(|&xi| {
                let lo = drift_at(-half + dx, xi).abs();
                let hi = drift_at(half - dx, xi).abs();
                lo.max(hi)
            })
            .fold(0.0f64, f64::max);

        let dt_stable = CFL_SAFETY / (j / (dx * dx) + 2.0 * g_max / dx);
        let dt = dt_max.min(self.config.dt).min(dt_stable);

        let (q, lambda) = (self.q, self.lambda);
        let x0 = self.field.x_grid[0];
        let DensityField {
            ref mut cond,
            ref atoms,
            ..
        } = self.field;
        cond.par_iter_mut()
            .zip(self.flux.par_iter_mut())
            .zip(atoms.values().par_iter())
            .for_each(|((p, flux), &xi)| {
                for (f, (idx, pair)) in flux.iter_mut().zip(p.windows(2).enumerate()) {
                    // Interior face between cells idx and idx+1.
                    let x_face = x0 + (idx as f64 + 0.5) * dx;
                    let g = tau * (omega * q * xi + x_face / lambda - x_face);
                    let w = g * dx / d;
                    *f = (d / dx) * (bernoulli(-w) * pair[0] - bernoulli(w) * pair[1]);
                }
                p[0] -= (dt / dx) * flux[0];
                for i in 1..n - 1 {
                    p[i] -= (dt / dx) * (flux[i] - flux[i - 1]);
                }
                p[n - 1] += (dt / dx) * flux[n - 2];
            });
        self.field.t += dt;

        self.check_health()?;
        Ok(dt)
    }

    /// Per-step guards: density stays above the negativity tolerance and the
    /// trapezoid mass of every conditional drifts by at most
    /// [`MASS_DRIFT_TOL`] per unit time since the last checkpoint.
    fn check_health(&mut self) -> Result<()> {
        let mins: Vec<f64> = self
            .field
            .cond
            .par_iter()
            .map(|p| p.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        for (a, &min) in mins.iter().enumerate() {
            if !(min >= NEGATIVE_DENSITY_TOL) {
                return Err(Error::PdeInstability(format!(
                    "conditional {a} dips to {min} at t = {}, below the {NEGATIVE_DENSITY_TOL} tolerance",
                    self.field.t
                )));
            }
        }
        let elapsed = self.field.t - self.mass_ref_t;
        let allowed = MASS_DRIFT_TOL * elapsed + 1e-9;
        let masses = self.conditional_masses();
        for (a, (&m, &m_ref)) in masses.iter().zip(&self.mass_ref).enumerate() {
            if (m - m_ref).abs() > allowed {
                return Err(Error::PdeInstability(format!(
                    "conditional {a} mass drifted from {m_ref} to {m} over {elapsed} time units at t = {}",
                    self.field.t
                )));
            }
        }
        if elapsed >= 1.0 {
            self.mass_ref = masses;
            self.mass_ref_t = self.field.t;
        }
        Ok(())
    }

    /// Advances the solution to exactly `t_target` (which must not lie in the
    /// past), then refreshes the reported order parameters.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        if !t_target.is_finite() || t_target < self.field.t - 1e-12 {
            return Err(Error::Domain(format!(
                "cannot advance backwards: current t = {}, requested {}",
                self.field.t, t_target
            )));
        }
        while self.field.t < t_target {
            let remaining = t_target - self.field.t;
            self.step(remaining)?;
        }
        self.field.t = t_target;
        self.refresh_moments();
        Ok(())
    }
}

/// `B(z) = z/(eᶻ − 1)`, the weight function of the exponentially fitted flux,
/// with a series fallback near the removable singularity at zero.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0 + z * z / 12.0
    } else {
        z / z.exp_m1()
    }
}

/// One recorded snapshot of an [`evolve_density`] run.
#[derive(Clone, Debug)]
pub struct DensitySnapshot {
    pub t: f64,
    pub q: f64,
    pub lambda: f64,
    /// Mixture density of the raw coordinate `x`.
    pub marginal: Vec<f64>,
    /// Mixture density of the norm-rescaled coordinate `x/λ_t`.
    pub rescaled: Vec<f64>,
}

/// A completed snapshot run: the shared grid plus the recorded snapshots.
#[derive(Clone, Debug)]
pub struct PdeRun {
    pub x_grid: Vec<f64>,
    pub snapshots: Vec<DensitySnapshot>,
}

/// Evolves the density from the standard initial condition and records both
/// marginals at the requested times (strictly increasing, nonnegative).
pub fn evolve_density(
    config: PdeConfig,
    atoms: SignalAtoms,
    init: InitKind,
    lambda0: f64,
    snapshot_times: &[f64],
    ode: Option<TheoryTrajectory>,
) -> Result<PdeRun> {
    if snapshot_times.is_empty() {
        return Err(Error::Config("at least one snapshot time is required".into()));
    }
    if snapshot_times[0] < 0.0 || snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "snapshot times must be nonnegative and strictly increasing".into(),
        ));
    }
    let mut solver = PdeSolver::new(config, atoms, init, lambda0, ode)?;
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        solver.advance_to(t)?;
        snapshots.push(DensitySnapshot {
            t,
            q: solver.q(),
            lambda: solver.lambda(),
            marginal: solver.field().marginal_density(),
            rescaled: solver.field().rescaled_marginal(solver.lambda())?,
        });
    }
    Ok(PdeRun {
        x_grid: solver.field().x_grid().to_vec(),
        snapshots,
    })
}

/// Closed-form steady conditional density on an arbitrary strictly increasing
/// grid: the Gibbs profile `P_s(x|ξ) ∝ exp((τ/J(Q_s))(2ωQ_sξx + x²/λ_s − x²))`
/// normalized by trapezoid quadrature. Integrability needs `λ_s > 1`, which
/// holds on both steady branches.
pub fn steady_density(x_grid: &[f64], xi: f64, omega: f64, tau: f64) -> Result<Vec<f64>> {
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "steady density needs a strictly increasing grid of at least two points".into(),
        ));
    }
    let steady = steady_state(omega, tau)?;
    let (q_s, lambda_s) = (steady.q_s(), steady.lambda_s);
    if lambda_s <= 1.0 {
        return Err(Error::Domain(format!(
            "steady exponent is not integrable: lambda_s = {lambda_s} <= 1"
        )));
    }
    let j_s = diffusion_coefficient(q_s, omega, tau);
    let exponent: Vec<f64> = x_grid
        .iter()
        .map(|&x| (tau / j_s) * (2.0 * omega * q_s * xi * x + x * x / lambda_s - x * x))
        .collect();
    let peak = exponent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = exponent.iter().map(|&e| (e - peak).exp()).collect();
    let z = trapezoid(x_grid, &p);
    if !(z > 0.0) {
        return Err(Error::Domain(
            "steady density normalizer vanished on the supplied grid".into(),
        ));
    }
    for v in &mut p {
        *v /= z;
    }
    Ok(p)
}

/// Atom-weighted mixture of steady conditional densities.
pub fn steady_marginal(x_grid: &[f64], atoms: &SignalAtoms, omega: f64, tau: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x_grid.len()];
    for (&xi, &w) in atoms.values().iter().zip(atoms.weights()) {
        let p = steady_density(x_grid, xi, omega, tau)?;
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    Ok(out)
}
