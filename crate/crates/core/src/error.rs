use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its mathematical domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// Input data violates a structural invariant.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Covariance factorization failed even after jitter escalation.
    #[error("{context}: covariance not positive definite (pivot {pivot}, jitter {jitter:e})")]
    Numerical {
        context: String,
        pivot: usize,
        jitter: f64,
    },

    /// A proposed design point coincides with an existing one.
    #[error("point within {tolerance:e} (scaled) of an existing design point")]
    Duplicate { tolerance: f64 },

    /// No admissible acquisition remains.
    #[error("acquisition exhausted: {0}")]
    AcquisitionExhausted(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The simulator produced a non-finite response.
    #[error("simulator returned {value} at input {input:?}")]
    Simulator { input: Vec<f64>, value: f64 },

    /// Too few classified failures to fit a bias distribution.
    #[error("insufficient failures to fit a bias distribution ({found} found, need at least 2)")]
    InsufficientFailures { found: usize },

    /// The bias density vanished where the nominal density does not.
    #[error("bias density is zero at sample {index}")]
    SupportViolation { index: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
