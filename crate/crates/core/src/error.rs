use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("gain is outside the set where the value Lyapunov equation is uniquely solvable")]
    NotInSigmaSet,

    #[error("gain is not stabilizing (spectral abscissa {abscissa:e})")]
    NotStabilizing { abscissa: f64 },

    #[error("no convergence after {0} iterations")]
    MaxIterExceeded(usize),

    #[error("trajectory starts at the reference gain")]
    DegenerateStart,

    #[error("instance generation failed after {0} attempts")]
    GenerationFailure(usize),

    #[error("gain sampling failed after {0} attempts")]
    SamplingFailure(usize),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::NoConvergence => "NoConvergence",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::NotPositiveDefinite(_) => "NotPD",
            Error::NotInSigmaSet => "NotInSigmaSet",
            Error::NotStabilizing { .. } => "NotStabilizing",
            Error::MaxIterExceeded(_) => "MaxIterExceeded",
            Error::DegenerateStart => "DegenerateStart",
            Error::GenerationFailure(_) => "GenerationFailure",
            Error::SamplingFailure(_) => "SamplingFailure",
            Error::InvalidInstance(_) => "InvalidInstance",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}
