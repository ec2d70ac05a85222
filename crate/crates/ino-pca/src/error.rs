//! Crate-wide error type.
//!
//! Errors fall into two families that the CLI maps onto distinct exit codes:
//! configuration/input problems (exit code 2) and numerical failures detected
//! at run time (exit code 3). Numerical failures carry enough context (step
//! index, offending values) to reproduce the condition.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or malformed spec string.
    #[error("configuration error: {0}")]
    Config(String),

    /// A stream update hit a degenerate state (zero norm, vanished estimate).
    #[error("numerical degeneracy at step {step}: {what}")]
    Degeneracy { step: u64, what: String },

    /// An input is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The ODE trajectory left the admissible region.
    #[error("ODE integration blew up at t = {t:.6} (Q = {q:.3e}, lambda = {lambda:.3e}); retry with a smaller dt")]
    OdeBlowup { t: f64, q: f64, lambda: f64 },

    /// The PDE solver violated a conservation or positivity check.
    #[error("PDE solver instability: {0}")]
    PdeInstability(String),

    /// The norm parameter left the band guaranteed by the boundedness lemma.
    #[error("norm parameter out of band at step {step}: lambda = {lambda:.6e} not in (0, {cap:.6e}]")]
    LambdaBand { step: u64, lambda: f64, cap: f64 },

    /// Malformed numeric input data (1-based row/column of the offending cell).
    #[error("parse error at row {row}, column {col}: {what}")]
    Parse { row: usize, col: usize, what: String },

    /// A Monte Carlo trial failed; carries the trial's identity while the
    /// underlying error keeps its own severity.
    #[error("trial {index} (seed {seed}, stream {index}) failed: {source}")]
    Trial {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Artifact serialization failed (treated as an output/IO problem).
    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration and input
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Io(_) | Error::Serialize(_) => 2,
            Error::Degeneracy { .. }
            | Error::Domain(_)
            | Error::OdeBlowup { .. }
            | Error::PdeInstability(_)
            | Error::LambdaBand { .. } => 3,
            Error::Trial { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_config_from_numerics() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(
            Error::Parse { row: 3, col: 1, what: "bad float".into() }.exit_code(),
            2
        );
        assert_eq!(
            Error::Degeneracy { step: 7, what: "zero norm".into() }.exit_code(),
            3
        );
        assert_eq!(Error::OdeBlowup { t: 1.0, q: 2.0, lambda: -1.0 }.exit_code(), 3);
    }

    #[test]
    fn trial_wrapper_keeps_the_inner_severity() {
        let numerical = Error::Trial {
            index: 4,
            seed: 9,
            source: Box::new(Error::LambdaBand { step: 11, lambda: 1e9, cap: 20.0 }),
        };
        assert_eq!(numerical.exit_code(), 3);
        let msg = numerical.to_string();
        assert!(msg.contains("trial 4"), "{msg}");
        assert!(msg.contains("step 11"), "{msg}");

        let config = Error::Trial {
            index: 0,
            seed: 1,
            source: Box::new(Error::Config("bad".into())),
        };
        assert_eq!(config.exit_code(), 2);
    }

    #[test]
    fn degeneracy_message_names_the_step() {
        let e = Error::Degeneracy { step: 42, what: "lambda below floor".into() };
        assert!(e.to_string().contains("step 42"));
    }
}
