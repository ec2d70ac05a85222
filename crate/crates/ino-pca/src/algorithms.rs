//! One-step update rules for the streaming PCA estimators.
//!
//! All steppers share the convention x ∈ ℝᵖ, λ = ‖x‖/√p, and consume one
//! observation per call in O(p) time — the rank-one product y(yᵀx) is
//! always evaluated as the scalar s = yᵀx times y, never as a p×p matrix.
//!
//! The family, with s = yᵀx:
//!
//! ```text
//! implicitly normalized (ino):   x' = x + (τ/p)(y·s/λ − x)
//! regularized (reg):             x' = x + (τ/p)(y·s − λ·x)
//! projection (oja):              x' = √p·x̂/‖x̂‖,  x̂ = x + (τ/p)y·s
//! krasulina:                     x' = x + (τ/p)(y·s − (s²/‖x‖²)·x)
//! oracle-adaptive (ada-ino):     ino step with τ = λ·ν̂(Q),  Q = ξᵀx/(pλ)
//! amnesic averaging (ccipca):    x' = ((k−1−l)/k)x + ((1+l)/k)y·s/‖x‖
//! adagrad-style (adaoja):        oja step with rate b₀√p/√Σ‖y·s/p‖²
//! ```
//!
//! The ino update divides the gradient direction by the running norm:
//! large λ damps the step, small λ amplifies it, and λ itself converges to
//! the leading eigenvalue ω + 1, so the effective rate anneals as learning
//! progresses without any explicit schedule. Note that the λ-division
//! makes the gradient term invariant under positive rescaling of x — the
//! scale of the state is deliberately a dynamical variable, not a gauge.

use crate::error::{Error, Result};
use crate::linalg;
use crate::spiked_model::EstimateState;
use crate::theory_ode;
use serde::Serialize;
use std::fmt;

/// Below this norm parameter the 1/λ gradient scaling is numerically
/// meaningless; crossing it is reported as an error rather than clamped,
/// so pathologies surface instead of being papered over.
pub const LAMBDA_FLOOR: f64 = 1e-12;

fn check_dims(state: &EstimateState, y: &[f64]) -> Result<()> {
    if state.x.len() != y.len() {
        return Err(Error::Domain(format!(
            "observation dimension {} does not match estimate dimension {}",
            y.len(),
            state.x.len()
        )));
    }
    Ok(())
}

fn check_lambda(state: &EstimateState) -> Result<()> {
    if state.lambda <= LAMBDA_FLOOR {
        return Err(Error::Degeneracy {
            step: state.k,
            what: format!("norm parameter λ = {:e} at or below the floor {LAMBDA_FLOOR:e}", state.lambda),
        });
    }
    Ok(())
}

/// Implicitly normalized update: x' = x + (τ/p)(y·s/λ − x).
pub fn ino_pca_step(state: &mut EstimateState, y: &[f64], tau: f64) -> Result<()> {
    check_dims(state, y)?;
    check_lambda(state)?;
    let p = state.x.len() as f64;
    let s = linalg::dot(y, &state.x);
    let y_coef = tau / p * s / state.lambda;
    let x_coef = 1.0 - tau / p;
    for (xi, &yi) in state.x.iter_mut().zip(y) {
        *xi = x_coef * *xi + y_coef * yi;
    }
    state.k += 1;
    state.refresh_lambda();
    Ok(())
}

/// Regularized update: x' = x + (τ/p)(y·s − λ·x). Identical learning
/// dynamics to a projection method in the limit, but the norm stays free.
pub fn regularized_step(state: &mut EstimateState, y: &[f64], tau: f64) -> Result<()> {
    check_dims(state, y)?;
    let p = state.x.len() as f64;
    let s = linalg::dot(y, &state.x);
    let y_coef = tau / p * s;
    let x_coef = 1.0 - tau / p * state.lambda;
    for (xi, &yi) in state.x.iter_mut().zip(y) {
        *xi = x_coef * *xi + y_coef * yi;
    }
    state.k += 1;
    state.refresh_lambda();
    Ok(())
}

/// Projection update: gradient step then exact renormalization to the
/// √p-sphere; λ is pinned to 1.
pub fn oja_step(state: &mut EstimateState, y: &[f64], tau: f64) -> Result<()> {
    check_dims(state, y)?;
    let p = state.x.len() as f64;
    let s = linalg::dot(y, &state.x);
    let y_coef = tau / p * s;
    for (xi, &yi) in state.x.iter_mut().zip(y) {
        *xi += y_coef * yi;
    }
    let n = linalg::norm(&state.x);
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::Degeneracy {
            step: state.k,
            what: format!("projection step produced a vector of norm {n}"),
        });
    }
    let scale = p.sqrt() / n;
    for xi in &mut state.x {
        *xi *= scale;
    }
    state.k += 1;
    state.lambda = 1.0;
    Ok(())
}

/// Krasulina update: x' = x + (τ/p)(y·s − (s²/‖x‖²)·x). The increment is
/// orthogonal to x by construction, so the norm drifts only through
/// second-order terms and carries no information.
pub fn krasulina_step(state: &mut EstimateState, y: &[f64], tau: f64) -> Result<()> {
    check_dims(state, y)?;
    check_lambda(state)?;
    let p = state.x.len() as f64;
    let s = linalg::dot(y, &state.x);
    let nx2 = linalg::dot(&state.x, &state.x);
    let y_coef = tau / p * s;
    let x_coef = 1.0 - tau / p * (s * s / nx2);
    for (xi, &yi) in state.x.iter_mut().zip(y) {
        *xi = x_coef * *xi + y_coef * yi;
    }
    state.k += 1;
    state.refresh_lambda();
    Ok(())
}

/// Oracle-adaptive variant: reads the true ω and ξ, computes the current
/// overlap Q = ξᵀx/(pλ), and applies the ino update at the rate λ·ν̂(Q)
/// that maximizes the instantaneous growth of Q. A benchmark, not a
/// practical algorithm — it peeks at the planted signal.
pub fn adaptive_ino_step(
    state: &mut EstimateState,
    y: &[f64],
    omega: f64,
    xi: &[f64],
) -> Result<()> {
    check_dims(state, y)?;
    check_lambda(state)?;
    if xi.len() != state.x.len() {
        return Err(Error::Domain(format!(
            "signal dimension {} does not match estimate dimension {}",
            xi.len(),
            state.x.len()
        )));
    }
    let p = state.x.len() as f64;
    let q = linalg::dot(xi, &state.x) / (p * state.lambda);
    let nu = theory_ode::optimal_rate(omega, q);
    ino_pca_step(state, y, state.lambda * nu)
}

/// Amnesic averaging update with forgetting parameter l ≥ 0:
/// x' = ((k−1−l)/k)·x + ((1+l)/k)·y·(yᵀx)/‖x‖, where k is the ordinal of
/// the sample being consumed. For k ≤ l+1 the retained weight is ≤ 0, so
/// early steps overwrite history rather than average into it.
pub fn ccipca_step(state: &mut EstimateState, y: &[f64], amnesia: f64) -> Result<()> {
    check_dims(state, y)?;
    check_lambda(state)?;
    let k = (state.k + 1) as f64;
    let norm = state.lambda * (state.x.len() as f64).sqrt();
    let s = linalg::dot(y, &state.x);
    let y_coef = (1.0 + amnesia) / k * s / norm;
    let x_coef = (k - 1.0 - amnesia) / k;
    for (xi, &yi) in state.x.iter_mut().zip(y) {
        *xi = x_coef * *xi + y_coef * yi;
    }
    state.k += 1;
    state.refresh_lambda();
    Ok(())
}

/// Adagrad-style projection update. The normalized gradient g = y·s/p has
/// O(1) norm; its squared norms accumulate into b, and the applied rate is
/// b₀√p/√b, which keeps the macroscopic effective rate dimension-free and
/// decaying as b₀/√t — fast early, conservative late, and slow to react
/// when the stream changes (the accumulator never forgets).
pub fn adaoja_step(state: &mut EstimateState, y: &[f64], b: &mut f64, b0: f64) -> Result<()> {
    check_dims(state, y)?;
    if *b < 0.0 || !b.is_finite() {
        return Err(Error::Domain(format!("gradient accumulator must be ≥ 0, got {b}")));
    }
    let p = state.x.len() as f64;
    let s = linalg::dot(y, &state.x);
    let g_scale = s / p;
    *b += g_scale * g_scale * linalg::dot(y, y);
    // A zero gradient (s = 0 with b still 0) contributes nothing; skip the
    // rate computation rather than divide by zero.
    let rate = if *b > 0.0 { b0 / b.sqrt() * p.sqrt() } else { 0.0 };
    oja_step(state, y, rate)
}

/// Parsed algorithm selection with its rate-like parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AlgorithmSpec {
    Ino { tau: f64 },
    Regularized { tau: f64 },
    Oja { tau: f64 },
    Krasulina { tau: f64 },
    AdaptiveIno,
    Ccipca { amnesia: f64 },
    AdaOja { b0: f64 },
}

impl AlgorithmSpec {
    /// Parse the grammar `ino[:T] | reg[:T] | oja[:T] | krasulina[:T] |
    /// ada-ino | ccipca[:L] | adaoja[:B]`. Omitted rate parameters fall
    /// back to `default_rate` (the amnesic parameter defaults to 4).
    pub fn parse(s: &str, default_rate: f64) -> Result<Self> {
        let (head, param) = match s.split_once(':') {
            Some((h, pstr)) => (h, Some(pstr)),
            None => (s, None),
        };
        let num = |p: Option<&str>, default: f64, what: &str| -> Result<f64> {
            match p {
                None => Ok(default),
                Some(text) => text.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("cannot parse {what} '{text}' as a number"))
                }),
            }
        };
        let spec = match head.to_ascii_lowercase().as_str() {
            "ino" => AlgorithmSpec::Ino { tau: num(param, default_rate, "learning rate")? },
            "reg" => AlgorithmSpec::Regularized { tau: num(param, default_rate, "learning rate")? },
            "oja" => AlgorithmSpec::Oja { tau: num(param, default_rate, "learning rate")? },
            "krasulina" => {
                AlgorithmSpec::Krasulina { tau: num(param, default_rate, "learning rate")? }
            }
            "ada-ino" => {
                if param.is_some() {
                    return Err(Error::Config(
                        "'ada-ino' takes no parameter (its rate is the oracle formula)".into(),
                    ));
                }
                AlgorithmSpec::AdaptiveIno
            }
            "ccipca" => AlgorithmSpec::Ccipca { amnesia: num(param, 4.0, "amnesic parameter")? },
            "adaoja" => AlgorithmSpec::AdaOja { b0: num(param, default_rate, "base rate")? },
            other => {
                return Err(Error::Config(format!(
                    "unknown algorithm '{other}' (expected ino, reg, oja, krasulina, ada-ino, ccipca, or adaoja)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::Config(format!("{what} must be positive, got {v}"));
        match *self {
            AlgorithmSpec::Ino { tau }
            | AlgorithmSpec::Regularized { tau }
            | AlgorithmSpec::Oja { tau }
            | AlgorithmSpec::Krasulina { tau } => {
                if tau > 0.0 && tau.is_finite() {
                    Ok(())
                } else {
                    Err(bad("learning rate", tau))
                }
            }
            AlgorithmSpec::AdaptiveIno => Ok(()),
            AlgorithmSpec::Ccipca { amnesia } => {
                if amnesia >= 0.0 && amnesia.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("amnesic parameter must be ≥ 0, got {amnesia}")))
                }
            }
            AlgorithmSpec::AdaOja { b0 } => {
                if b0 > 0.0 && b0.is_finite() {
                    Ok(())
                } else {
                    Err(bad("base rate", b0))
                }
            }
        }
    }

    /// Whether the stepper needs oracle access to (ω, ξ).
    pub fn is_oracle(&self) -> bool {
        matches!(self, AlgorithmSpec::AdaptiveIno)
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmSpec::Ino { tau } => write!(f, "ino:{tau}"),
            AlgorithmSpec::Regularized { tau } => write!(f, "reg:{tau}"),
            AlgorithmSpec::Oja { tau } => write!(f, "oja:{tau}"),
            AlgorithmSpec::Krasulina { tau } => write!(f, "krasulina:{tau}"),
            AlgorithmSpec::AdaptiveIno => f.write_str("ada-ino"),
            AlgorithmSpec::Ccipca { amnesia } => write!(f, "ccipca:{amnesia}"),
            AlgorithmSpec::AdaOja { b0 } => write!(f, "adaoja:{b0}"),
        }
    }
}

/// Stateful single-component stepper: owns the algorithm parameters and
/// whatever per-run state the algorithm carries (only the adagrad
/// accumulator today).
#[derive(Debug, Clone)]
pub struct Stepper {
    spec: AlgorithmSpec,
    adaoja_b: f64,
}

impl Stepper {
    pub fn new(spec: AlgorithmSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Stepper { spec, adaoja_b: 0.0 })
    }

    pub fn spec(&self) -> &AlgorithmSpec {
        &self.spec
    }

    /// Advance the estimate by one observation. `omega` and `xi` describe
    /// the true generative process and are read only by the oracle-adaptive
    /// stepper.
    pub fn step(
        &mut self,
        state: &mut EstimateState,
        y: &[f64],
        omega: f64,
        xi: &[f64],
    ) -> Result<()> {
        match self.spec {
            AlgorithmSpec::Ino { tau } => ino_pca_step(state, y, tau),
            AlgorithmSpec::Regularized { tau } => regularized_step(state, y, tau),
            AlgorithmSpec::Oja { tau } => oja_step(state, y, tau),
            AlgorithmSpec::Krasulina { tau } => krasulina_step(state, y, tau),
            AlgorithmSpec::AdaptiveIno => adaptive_ino_step(state, y, omega, xi),
            AlgorithmSpec::Ccipca { amnesia } => ccipca_step(state, y, amnesia),
            AlgorithmSpec::AdaOja { b0 } => adaoja_step(state, y, &mut self.adaoja_b, b0),
        }
    }
}

/// Multi-component estimator: r single-component steppers chained by
/// Gram–Schmidt deflation. Component i is lazily initialized to the i-th
/// deflated observation; afterwards each sample is consumed by every
/// initialized component in order, with the observation deflated against
/// component i before component i+1 sees it.
#[derive(Debug, Clone)]
pub struct MultiPcState {
    components: Vec<EstimateState>,
    steppers: Vec<Stepper>,
    r: usize,
    samples_seen: u64,
}

impl MultiPcState {
    pub fn new(r: usize, spec: AlgorithmSpec) -> Result<Self> {
        if r == 0 {
            return Err(Error::Config("component count must be at least 1".into()));
        }
        if spec.is_oracle() {
            return Err(Error::Config(
                "the oracle-adaptive stepper is undefined under deflation: deflated residuals \
                 have no single planted direction to compute the overlap against"
                    .into(),
            ));
        }
        let steppers = (0..r).map(|_| Stepper::new(spec)).collect::<Result<Vec<_>>>()?;
        Ok(MultiPcState { components: Vec::with_capacity(r), steppers, r, samples_seen: 0 })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn components(&self) -> &[EstimateState] {
        &self.components
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    /// Consume one observation.
    pub fn step(&mut self, y: &[f64]) -> Result<()> {
        if self.r > y.len() {
            return Err(Error::Config(format!(
                "component count {} exceeds ambient dimension {}",
                self.r,
                y.len()
            )));
        }
        self.samples_seen += 1;
        let mut resid = y.to_vec();
        let active = self.r.min(self.samples_seen as usize);
        for i in 0..active {
            if i == self.components.len() {
                // Lazy init: the i-th component starts as the current
                // residual, already deflated against components 0..i.
                let mut fresh = EstimateState::new(resid.clone());
                fresh.k = 0;
                self.components.push(fresh);
            } else {
                self.steppers[i].step(&mut self.components[i], &resid, 0.0, &[])?;
            }
            let v = &self.components[i].x;
            let nv2 = linalg::dot(v, v);
            if nv2 <= 0.0 || !nv2.is_finite() {
                return Err(Error::Degeneracy {
                    step: self.samples_seen,
                    what: format!("component {i} collapsed to norm {}", nv2.sqrt()),
                });
            }
            let coef = linalg::dot(&resid, v) / nv2;
            for (rj, &vj) in resid.iter_mut().zip(v) {
                *rj -= coef * vj;
            }
        }
        Ok(())
    }
}
