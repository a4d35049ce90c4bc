use thiserror::Error;

use crate::nonlinearity::Domain;

/// Errors raised by the decomposition engines and their supporting numerics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: max asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite (factorization failed after jitter {jitter:e})")]
    NotPsd { jitter: f64 },

    #[error("{0} did not converge within its iteration cap")]
    NoConvergence(&'static str),

    #[error("matrix dimensions do not match: {0}")]
    DimensionMismatch(String),

    #[error("variance must be positive and finite, got {0}")]
    InvalidVariance(f64),

    #[error("power must be positive and finite, got {0}")]
    InvalidPower(f64),

    #[error("correlation coefficient must satisfy |rho| <= 1, got |rho| = {0}")]
    InvalidCorrelation(f64),

    #[error("noise power must be positive, got {0}")]
    InvalidNoisePower(f64),

    #[error("non-linearity `{name}` expects {expected} input, got {got}")]
    DomainMismatch {
        name: String,
        expected: Domain,
        got: Domain,
    },

    #[error("non-linearity `{0}` exposes no derivative")]
    NoDerivative(String),

    #[error("non-linearity `{0}` has no closed-form Bussgang gain")]
    NoClosedForm(String),

    #[error("non-linearity `{0}` does not satisfy E{{x | Q(x)}} = Q(x) at this input power")]
    ConditionalMeanNotSatisfied(String),

    #[error("joint covariance of (x, y) is not positive semidefinite (min eigenvalue {0:e})")]
    JointCovarianceNotPsd(f64),

    #[error("at least {need} samples required, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse non-linearity spec: {0}")]
    Parse(String),

    #[error("empty series")]
    EmptySeries,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
