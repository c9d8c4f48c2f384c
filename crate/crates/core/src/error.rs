use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter lies outside the range where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A Gamma factor was asked for at (or within tolerance of) a pole.
    #[error("Gamma pole at {factor} (argument {argument}, nearest integer {nearest})")]
    Pole {
        factor: String,
        argument: f64,
        nearest: i64,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(QuadDiagnostics),

    #[error("covariance factorization failed after jitter {jitter:e}: {reason}")]
    Factorization { jitter: f64, reason: String },

    /// A path simulation used up its step budget before leaving the cone.
    #[error("step budget of {max_steps} exhausted at t={elapsed:.4} (|z|={radius:.4})")]
    Timeout {
        max_steps: u64,
        elapsed: f64,
        radius: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn is_pole(&self) -> bool {
        matches!(self, Error::Pole { .. })
    }

    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}

/// What the quadrature engine knew when it gave up.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadDiagnostics {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub levels: usize,
}

impl fmt::Display for QuadDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "last value {:e}, error estimate {:e} after {} levels / {} evaluations",
            self.value, self.error_estimate, self.levels, self.evaluations
        )
    }
}
