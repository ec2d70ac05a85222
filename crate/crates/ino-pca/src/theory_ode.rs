//! Deterministic high-dimensional limit of the implicitly normalized
//! update: the coupled ODE system for the cosine similarity Q_t and the
//! norm parameter λ_t, its closed-form steady states and phase transition,
//! and the oracle-optimal adaptive rate.
//!
//! In macroscopic time t = k/p the order parameters obey
//!
//! ```text
//! dQ/dt = (τQ/λ)·(ω − ωQ² − τ(ωQ² + 1)/(2λ))
//! dλ/dt = τ·(ωQ² + 1 − λ + τ(ωQ² + 1)/(2λ))
//! ```
//!
//! The system has two fixed-point branches. For ω above the critical SNR
//! ω_c = (−1 + √(1+2τ))/2 the learning branch
//!
//! ```text
//! Q_s² = (ω² + ω − τ/2)/(ω² + ω + τω/2),   λ_s = ω + 1
//! ```
//!
//! is attracting, and λ doubles as an estimator of the leading eigenvalue.
//! Below ω_c only the no-learning branch Q_s = 0, λ_s = (1 + √(1+2τ))/2
//! survives — a sharp phase transition in steady-state accuracy.
//!
//! Integration is classical fixed-step RK4 (default dt 1e-3); a fixed step
//! keeps trajectories bit-reproducible across runs and platforms, and the
//! system is smooth and non-stiff so adaptivity buys nothing here.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;

/// Default RK4 step for [`integrate`].
pub const DEFAULT_DT: f64 = 1e-3;
/// Tolerance by which |Q| may exceed 1 before the integrator reports a
/// blowup (rounding headroom only).
const Q_OVERSHOOT: f64 = 1e-9;

/// Right-hand side of the coupled (Q, λ) system.
pub fn ode_rhs(q: f64, lambda: f64, omega: f64, tau: f64) -> Result<(f64, f64)> {
    if lambda <= 0.0 {
        return Err(Error::Domain(format!("norm parameter must be positive, got {lambda}")));
    }
    let noise = omega * q * q + 1.0;
    let dq = tau * q / lambda * (omega - omega * q * q - tau * noise / (2.0 * lambda));
    let dl = tau * (noise - lambda + tau * noise / (2.0 * lambda));
    Ok((dq, dl))
}

/// Cosine-similarity ODE of the projection method at rate τ̂ (its norm is
/// pinned to 1, so the system is one-dimensional):
/// dQ/dt = τ̂Q(ω − ωQ² − τ̂(ωQ²+1)/2).
pub fn oja_ode_rhs(q: f64, omega: f64, tau_hat: f64) -> f64 {
    let noise = omega * q * q + 1.0;
    tau_hat * q * (omega - omega * q * q - tau_hat * noise / 2.0)
}

/// Rate factor ν̂ = ω(1 − Q²)/(ωQ² + 1) that maximizes the instantaneous
/// growth of Q when the update runs at τ = λ·ν̂. At zero overlap it equals
/// ω (aggressive search); at perfect overlap it vanishes (pure tracking).
pub fn optimal_rate(omega: f64, q: f64) -> f64 {
    omega * (1.0 - q * q) / (omega * q * q + 1.0)
}

/// Growth objective whose maximizer over ν is [`optimal_rate`]: the dQ/dt
/// obtained at rate τ = λν, divided by the positive factor Q,
/// g(ν) = ν(ω − ωQ²) − ν²(ωQ² + 1)/2.
pub fn rate_objective(omega: f64, q: f64, nu: f64) -> f64 {
    nu * (omega - omega * q * q) - nu * nu * (omega * q * q + 1.0) / 2.0
}

/// Initial-norm choice λ₀* = τ/ω that maximizes early overlap growth.
pub fn optimal_lambda0(tau: f64, omega: f64) -> Result<f64> {
    if omega <= 0.0 {
        return Err(Error::Domain(format!(
            "optimal initial norm is undefined without signal (ω = {omega})"
        )));
    }
    Ok(tau / omega)
}

/// Critical SNR ω_c = (−1 + √(1 + 2τ))/2 separating the no-learning and
/// learning phases.
pub fn critical_snr(tau: f64) -> f64 {
    (-1.0 + (1.0 + 2.0 * tau).sqrt()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Unstable,
    Learning,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Unstable => f.write_str("unstable"),
            Branch::Learning => f.write_str("learning"),
        }
    }
}

/// A fixed point of the (Q, λ) system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub branch: Branch,
    pub q_s_sq: f64,
    pub lambda_s: f64,
}

impl SteadyState {
    /// Nonnegative root of Q_s².
    pub fn q_s(&self) -> f64 {
        self.q_s_sq.sqrt()
    }
}

/// Closed-form steady state: the learning branch exists (and is returned)
/// exactly when ω² + ω − τ/2 > 0, i.e. ω > ω_c; at the tie the unstable
/// branch is reported.
pub fn steady_state(omega: f64, tau: f64) -> Result<SteadyState> {
    if omega < 0.0 || !omega.is_finite() {
        return Err(Error::Config(format!("SNR must be finite and ≥ 0, got {omega}")));
    }
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::Config(format!("learning rate must be positive, got {tau}")));
    }
    let numerator = omega * omega + omega - tau / 2.0;
    if numerator > 0.0 {
        Ok(SteadyState {
            branch: Branch::Learning,
            q_s_sq: numerator / (omega * omega + omega + tau * omega / 2.0),
            lambda_s: omega + 1.0,
        })
    } else {
        Ok(SteadyState {
            branch: Branch::Unstable,
            q_s_sq: 0.0,
            lambda_s: (1.0 + (1.0 + 2.0 * tau).sqrt()) / 2.0,
        })
    }
}

/// How the learning rate enters the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "tau")]
pub enum RateRule {
    /// Constant τ.
    Fixed(f64),
    /// τ_t = λ_t·ν̂(Q_t), the oracle-optimal schedule.
    Adaptive,
}

/// Parameters of one ODE integration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeParams {
    pub omega: f64,
    pub rate: RateRule,
    pub q0: f64,
    pub lambda0: f64,
}

impl OdeParams {
    pub fn validate(&self) -> Result<()> {
        if self.omega < 0.0 || !self.omega.is_finite() {
            return Err(Error::Config(format!("SNR must be finite and ≥ 0, got {}", self.omega)));
        }
        if let RateRule::Fixed(tau) = self.rate {
            if tau <= 0.0 || !tau.is_finite() {
                return Err(Error::Config(format!("learning rate must be positive, got {tau}")));
            }
        }
        if !(self.q0 > -1.0 && self.q0 < 1.0) || self.q0 == 0.0 {
            return Err(Error::Config(format!(
                "initial overlap must lie in (−1, 1) and be nonzero, got {}",
                self.q0
            )));
        }
        if self.lambda0 <= 0.0 || !self.lambda0.is_finite() {
            return Err(Error::Config(format!(
                "initial norm parameter must be positive, got {}",
                self.lambda0
            )));
        }
        Ok(())
    }

    fn rhs(&self, q: f64, lambda: f64) -> Result<(f64, f64)> {
        let tau = match self.rate {
            RateRule::Fixed(tau) => tau,
            RateRule::Adaptive => lambda * optimal_rate(self.omega, q),
        };
        ode_rhs(q, lambda, self.omega, tau)
    }
}

/// Integrated (Q_t, λ_t) path on a fixed time grid.
#[derive(Debug, Clone)]
pub struct TheoryTrajectory {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl TheoryTrajectory {
    pub fn final_q(&self) -> f64 {
        *self.q.last().expect("trajectory is never empty")
    }

    pub fn final_lambda(&self) -> f64 {
        *self.lambda.last().expect("trajectory is never empty")
    }

    fn interp(xs: &[f64], ys: &[f64], t: f64) -> f64 {
        match xs.binary_search_by(|probe| probe.partial_cmp(&t).expect("finite time grid")) {
            Ok(i) => ys[i],
            Err(0) => ys[0],
            Err(i) if i == xs.len() => ys[xs.len() - 1],
            Err(i) => {
                let w = (t - xs[i - 1]) / (xs[i] - xs[i - 1]);
                ys[i - 1] + w * (ys[i] - ys[i - 1])
            }
        }
    }

    /// Linear interpolation of Q at time `t` (clamped to the grid span).
    pub fn q_at(&self, t: f64) -> f64 {
        Self::interp(&self.t, &self.q, t)
    }

    /// Linear interpolation of λ at time `t` (clamped to the grid span).
    pub fn lambda_at(&self, t: f64) -> f64 {
        Self::interp(&self.t, &self.lambda, t)
    }
}

/// Integrate the coupled system from (Q₀, λ₀) to `t_max` with fixed-step
/// RK4 (the final step is shortened to land on `t_max` exactly). Reports
/// a blowup error if the trajectory leaves |Q| ≤ 1 + 1e-9, loses λ > 0,
/// or becomes non-finite.
pub fn integrate(params: &OdeParams, t_max: f64, dt: f64) -> Result<TheoryTrajectory> {
    params.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("integrator step must be positive, got {dt}")));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Config(format!("integration horizon must be positive, got {t_max}")));
    }
    let steps = (t_max / dt).ceil() as usize;
    let mut t = Vec::with_capacity(steps + 1);
    let mut qs = Vec::with_capacity(steps + 1);
    let mut ls = Vec::with_capacity(steps + 1);
    let (mut q, mut lambda) = (params.q0, params.lambda0);
    t.push(0.0);
    qs.push(q);
    ls.push(lambda);
    for i in 0..steps {
        let t_now = i as f64 * dt;
        let h = (t_max - t_now).min(dt);
        let (k1q, k1l) = params.rhs(q, lambda)?;
        let (k2q, k2l) = params.rhs(q + 0.5 * h * k1q, lambda + 0.5 * h * k1l)?;
        let (k3q, k3l) = params.rhs(q + 0.5 * h * k2q, lambda + 0.5 * h * k2l)?;
        let (k4q, k4l) = params.rhs(q + h * k3q, lambda + h * k3l)?;
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        lambda += h / 6.0 * (k1l + 2.0 * k2l + 2.0 * k3l + k4l);
        let t_next = if i + 1 == steps { t_max } else { t_now + h };
        if !q.is_finite() || !lambda.is_finite() || q.abs() > 1.0 + Q_OVERSHOOT || lambda <= 0.0 {
            return Err(Error::OdeBlowup { t: t_next, q, lambda });
        }
        t.push(t_next);
        qs.push(q);
        ls.push(lambda);
    }
    Ok(TheoryTrajectory { t, q: qs, lambda: ls })
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Both closed-form branches are genuine fixed points wherever they
        // are defined.
        #[test]
        fn branches_zero_the_rhs(omega in 0.0f64..2.0, tau in 0.05f64..1.0) {
            let ss = steady_state(omega, tau).unwrap();
            let (dq, dl) = ode_rhs(ss.q_s(), ss.lambda_s, omega, tau).unwrap();
            prop_assert!(dq.abs() <= 1e-12);
            prop_assert!(dl.abs() <= 1e-12);
            // The unstable branch is also always a fixed point.
            let lambda_u = (1.0 + (1.0 + 2.0 * tau).sqrt()) / 2.0;
            let (dq0, dl0) = ode_rhs(0.0, lambda_u, omega, tau).unwrap();
            prop_assert_eq!(dq0, 0.0);
            prop_assert!(dl0.abs() <= 1e-12);
        }

        // ν̂ maximizes the growth objective against nearby rates.
        #[test]
        fn rate_factor_is_locally_optimal(
            omega in 0.01f64..4.0,
            q in 0.01f64..0.995,
        ) {
            let nu = optimal_rate(omega, q);
            let best = rate_objective(omega, q, nu);
            prop_assert!(best >= rate_objective(omega, q, nu * 1.01) - 1e-15);
            prop_assert!(best >= rate_objective(omega, q, nu * 0.99) - 1e-15);
        }

        // The learning branch exists exactly above the critical SNR.
        #[test]
        fn branch_agrees_with_critical_snr(omega in 0.0f64..2.0, tau in 0.05f64..1.0) {
            let ss = steady_state(omega, tau).unwrap();
            let wc = critical_snr(tau);
            if omega > wc * (1.0 + 1e-12) {
                prop_assert_eq!(ss.branch, Branch::Learning);
                prop_assert!(ss.q_s_sq > 0.0 && ss.q_s_sq <= 1.0);
            }
            if omega < wc * (1.0 - 1e-12) {
                prop_assert_eq!(ss.branch, Branch::Unstable);
            }
        }
    }
}
