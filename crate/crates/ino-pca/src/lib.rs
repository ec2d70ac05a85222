//! Streaming-PCA laboratory: scale-aware one-pass estimators on spiked
//! covariance streams, with their closed-form large-dimension dynamics.
//!
//! The crate has three layers:
//!
//! * **Simulation** — [`spiked_model`] generates the spiked covariance
//!   stream y = √(ω/p)·c·ξ + a and [`algorithms`] implements the one-step
//!   update rules (implicitly normalized, regularized, projection,
//!   Krasulina, oracle-adaptive, amnesic averaging, adagrad-style), plus a
//!   deflation wrapper for multiple components.
//! * **Theory** — [`theory_ode`] integrates the closed-form (Q_t, λ_t)
//!   moment flow of the large-p limit and evaluates steady states and the
//!   phase transition; [`theory_pde`] evolves the full limiting density of
//!   iterate coordinates under the nonlinear Fokker–Planck equation.
//! * **Experiments** — [`harness`] runs seeded Monte Carlo ensembles in
//!   parallel, overlays them against the theory curves, and reproduces the
//!   standard figure suite; the `ino-pca` binary exposes all of it on the
//!   command line.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod output;
pub mod spiked_model;
pub mod theory_ode;
pub mod theory_pde;

pub use error::{Error, Result};
