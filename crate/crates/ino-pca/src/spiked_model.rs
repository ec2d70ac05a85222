//! Spiked covariance data stream and estimate initialization.
//!
//! Observations are p-dimensional vectors
//!
//! ```text
//! y = √(ω/p)·c·ξ + a,      c ~ N(0,1),  a ~ N(0, I_p),
//! ```
//!
//! so E[yyᵀ] = I + (ω/p)ξξᵀ has a single planted eigenvector ξ with
//! eigenvalue 1 + ω. The signal direction is drawn once per trial with iid
//! entries from one of three laws (symmetric uniform, shifted exponential,
//! or a sparse two-point mixture) and then rescaled to ‖ξ‖ = √p exactly.
//! The exact rescaling pins the identities used throughout: Var(yᵀξ) =
//! p(1 + ω) and E‖y‖² = p + ω, with no finite-p distribution drift.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg;

/// Default shift added to the rate-1 exponential entries of [`SignalKind::ExpShift`].
pub const DEFAULT_EXPSHIFT_BIAS: f64 = 0.9;
/// Default occupation probability of [`SignalKind::SparseMixture`].
pub const DEFAULT_SPARSE_RHO: f64 = 0.05;

/// Entry distribution for the planted direction. Whatever the raw law, the
/// sampled vector is rescaled to ‖ξ‖ = √p exactly, so only the shape of the
/// distribution matters, not its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalKind {
    /// Entries uniform on [−√3, √3] (unit second moment before rescaling).
    UniformSym,
    /// Entries Exp(1) + bias; asymmetric and strictly positive for bias ≥ 0.
    ExpShift { bias: f64 },
    /// Entries 1/√ρ with probability ρ, else 0 (unit second moment).
    SparseMixture { rho: f64 },
}

impl SignalKind {
    pub fn validate(self) -> Result<()> {
        match self {
            SignalKind::UniformSym => Ok(()),
            SignalKind::ExpShift { bias } => {
                if bias.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("expshift bias must be finite, got {bias}")))
                }
            }
            SignalKind::SparseMixture { rho } => {
                if rho > 0.0 && rho < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "sparse mixture weight must lie in (0, 1), got {rho}"
                    )))
                }
            }
        }
    }

    /// Quantile function of the raw entry law, u ∈ (0, 1). Used to quantize
    /// a continuous signal distribution into atoms for the density solver;
    /// the solver rescales the atoms to unit second moment afterwards, so
    /// no normalization is applied here.
    pub fn quantile(self, u: f64) -> f64 {
        assert!(u > 0.0 && u < 1.0, "quantile argument must lie in (0,1), got {u}");
        match self {
            SignalKind::UniformSym => 3.0f64.sqrt() * (2.0 * u - 1.0),
            SignalKind::ExpShift { bias } => -(-u).ln_1p() + bias,
            SignalKind::SparseMixture { rho } => {
                if u < 1.0 - rho {
                    0.0
                } else {
                    1.0 / rho.sqrt()
                }
            }
        }
    }

    /// The exact atom decomposition for two-point laws, as (value, weight)
    /// pairs; `None` for continuous laws, which must be quantized instead.
    pub fn exact_atoms(self) -> Option<Vec<(f64, f64)>> {
        match self {
            SignalKind::SparseMixture { rho } => {
                Some(vec![(0.0, 1.0 - rho), (1.0 / rho.sqrt(), rho)])
            }
            _ => None,
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalKind::UniformSym => f.write_str("uniform"),
            SignalKind::ExpShift { bias } => write!(f, "expshift:{bias}"),
            SignalKind::SparseMixture { rho } => write!(f, "sparse:{rho}"),
        }
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    /// Grammar: `uniform`, `expshift[:BIAS]`, `sparse[:RHO]`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, param) = match s.split_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (s, None),
        };
        let parse_param = |p: Option<&str>, default: f64, what: &str| -> Result<f64> {
            match p {
                None => Ok(default),
                Some(text) => text.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("cannot parse {what} '{text}' as a number"))
                }),
            }
        };
        let kind = match head.to_ascii_lowercase().as_str() {
            "uniform" => {
                if param.is_some() {
                    return Err(Error::Config("'uniform' takes no parameter".into()));
                }
                SignalKind::UniformSym
            }
            "expshift" => SignalKind::ExpShift {
                bias: parse_param(param, DEFAULT_EXPSHIFT_BIAS, "expshift bias")?,
            },
            "sparse" => SignalKind::SparseMixture {
                rho: parse_param(param, DEFAULT_SPARSE_RHO, "sparse mixture weight")?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown signal distribution '{other}' (expected uniform, expshift:B, or sparse:R)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl Serialize for SignalKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SignalKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Draw a signal direction with iid entries from `kind`, rescaled so that
/// ‖ξ‖ = √p holds exactly.
pub fn make_signal<R: Rng + ?Sized>(kind: SignalKind, p: usize, rng: &mut R) -> Result<Vec<f64>> {
    if p < 2 {
        return Err(Error::Config(format!("signal dimension must be at least 2, got {p}")));
    }
    kind.validate()?;
    // A sparse draw can come out all-zero for tiny p·ρ; redraw (the retry
    // count is astronomically generous — the miss probability is (1−ρ)ᵖ).
    for _ in 0..1000 {
        let mut xi: Vec<f64> = match kind {
            SignalKind::UniformSym => {
                (0..p).map(|_| 3.0f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0)).collect()
            }
            SignalKind::ExpShift { bias } => (0..p)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    e + bias
                })
                .collect(),
            SignalKind::SparseMixture { rho } => {
                let atom = 1.0 / rho.sqrt();
                (0..p)
                    .map(|_| if rng.random::<f64>() < rho { atom } else { 0.0 })
                    .collect()
            }
        };
        let norm = linalg::norm(&xi);
        if norm > 0.0 {
            let scale = (p as f64).sqrt() / norm;
            for v in &mut xi {
                *v *= scale;
            }
            return Ok(xi);
        }
    }
    Err(Error::Domain(format!(
        "signal draw degenerate: 1000 consecutive all-zero samples from {kind}"
    )))
}

/// Running estimate of the leading principal direction: the iterate x, its
/// cached norm parameter λ = ‖x‖/√p, and the number of observations
/// consumed. Steppers keep λ consistent with x after every update.
#[derive(Debug, Clone)]
pub struct EstimateState {
    pub(crate) x: Vec<f64>,
    pub(crate) lambda: f64,
    pub(crate) k: u64,
}

impl EstimateState {
    /// Wrap an iterate, computing λ from it.
    pub fn new(x: Vec<f64>) -> Self {
        let lambda = linalg::norm(&x) / (x.len() as f64).sqrt();
        EstimateState { x, lambda, k: 0 }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step_count(&self) -> u64 {
        self.k
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    pub(crate) fn refresh_lambda(&mut self) {
        self.lambda = linalg::norm(&self.x) / (self.x.len() as f64).sqrt();
    }
}

/// One trial's data-generating process: a fixed planted direction and the
/// signal-to-noise ratio ω.
#[derive(Debug, Clone)]
pub struct SpikedModel {
    omega: f64,
    xi: Vec<f64>,
}

impl SpikedModel {
    pub fn new(omega: f64, xi: Vec<f64>) -> Result<Self> {
        if omega < 0.0 || !omega.is_finite() {
            return Err(Error::Config(format!(
                "signal-to-noise ratio must be finite and ≥ 0, got {omega}"
            )));
        }
        if xi.len() < 2 {
            return Err(Error::Config("signal direction must have dimension ≥ 2".into()));
        }
        let p = xi.len() as f64;
        let norm = linalg::norm(&xi);
        if (norm - p.sqrt()).abs() > 1e-8 * p.sqrt() {
            return Err(Error::Config(format!(
                "signal direction must have norm √p = {:.6}, got {:.6}",
                p.sqrt(),
                norm
            )));
        }
        Ok(SpikedModel { omega, xi })
    }

    pub fn dimension(&self) -> usize {
        self.xi.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn signal(&self) -> &[f64] {
        &self.xi
    }

    /// Replace the planted direction (used by the nonstationary experiment,
    /// which redraws ξ mid-stream while keeping the estimate).
    pub fn set_signal(&mut self, xi: Vec<f64>) -> Result<()> {
        let fresh = SpikedModel::new(self.omega, xi)?;
        if fresh.dimension() != self.dimension() {
            return Err(Error::Config(format!(
                "replacement signal has dimension {} but the stream has dimension {}",
                fresh.dimension(),
                self.dimension()
            )));
        }
        self.xi = fresh.xi;
        Ok(())
    }

    /// Draw one observation y = √(ω/p)·c·ξ + a into `out`, returning the
    /// latent signal coefficient c (exposed so moment checks can verify the
    /// generator against its definition).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> f64 {
        debug_assert_eq!(out.len(), self.xi.len());
        let p = self.xi.len() as f64;
        let c: f64 = StandardNormal.sample(rng);
        let coef = (self.omega / p).sqrt() * c;
        for (o, &x) in out.iter_mut().zip(&self.xi) {
            let a: f64 = StandardNormal.sample(rng);
            *o = coef * x + a;
        }
        c
    }

    /// Convenience wrapper allocating a fresh observation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut y = vec![0.0; self.xi.len()];
        self.sample_into(rng, &mut y);
        y
    }
}

/// How the estimate is seeded at k = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InitKind {
    /// Uniformly random direction: overlap with ξ is O(1/√p).
    Cold,
    /// Planted overlap: cos(x₀, ξ) = c exactly.
    Warm { c: f64 },
}

impl InitKind {
    pub fn validate(&self) -> Result<()> {
        if let InitKind::Warm { c } = self {
            if !(*c > 0.0 && *c < 1.0) {
                return Err(Error::Config(format!(
                    "warm-start overlap must lie strictly between 0 and 1, got {c}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitKind::Cold => f.write_str("cold"),
            InitKind::Warm { c } => write!(f, "warm:{c}"),
        }
    }
}

impl FromStr for InitKind {
    type Err = Error;

    /// Grammar: `cold`, `warm[:C]` (default C = 0.1).
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.to_ascii_lowercase().split_once(':') {
            None => match s.to_ascii_lowercase().as_str() {
                "cold" => InitKind::Cold,
                "warm" => InitKind::Warm { c: 0.1 },
                other => {
                    return Err(Error::Config(format!(
                        "unknown initialization '{other}' (expected cold or warm:C)"
                    )))
                }
            },
            Some(("warm", c)) => InitKind::Warm {
                c: c.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("cannot parse warm-start overlap '{c}' as a number"))
                })?,
            },
            Some((other, _)) => {
                return Err(Error::Config(format!(
                    "unknown initialization '{other}' (expected cold or warm:C)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Build the initial estimate with ‖x₀‖ = √p·λ₀ exactly, and with
/// cos(x₀, ξ) = c exactly in the warm case. The warm construction projects
/// a Gaussian draw orthogonal to ξ, normalizes that component to √p, and
/// mixes: x₀ = λ₀(c·ξ + √(1−c²)·z⊥), which makes both the norm and the
/// overlap exact rather than merely exact in expectation; a final rescale
/// removes the last rounding residue so λ₀ is stored verbatim.
pub fn init_estimate<R: Rng + ?Sized>(
    init: InitKind,
    lambda0: f64,
    xi: &[f64],
    rng: &mut R,
) -> Result<EstimateState> {
    if lambda0 <= 0.0 || !lambda0.is_finite() {
        return Err(Error::Config(format!(
            "initial norm parameter must be positive, got {lambda0}"
        )));
    }
    init.validate()?;
    let p = xi.len();
    let sqrt_p = (p as f64).sqrt();
    let mut z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let mut x = match init {
        InitKind::Cold => z,
        InitKind::Warm { c } => {
            // Remove the ξ-component, then renormalize the remainder to √p.
            let proj = linalg::dot(&z, xi) / (p as f64);
            for (v, &xc) in z.iter_mut().zip(xi) {
                *v -= proj * xc;
            }
            let zn = linalg::norm(&z);
            if zn < 1e-12 * sqrt_p {
                return Err(Error::Domain(
                    "warm start degenerate: random draw was parallel to the signal".into(),
                ));
            }
            let orth_scale = sqrt_p / zn;
            let tangent = (1.0 - c * c).sqrt();
            z.iter().zip(xi).map(|(&zp, &xc)| c * xc + tangent * zp * orth_scale).collect()
        }
    };
    let scale = lambda0 * sqrt_p / linalg::norm(&x);
    for v in &mut x {
        *v *= scale;
    }
    let mut state = EstimateState::new(x);
    state.lambda = lambda0;
    Ok(state)
}
