use thiserror::Error;

/// Failures raised by the numerical kernels, geometry and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rank deficient in qf")]
    RankDeficient,
    #[error("matrix not positive definite")]
    NotPositiveDefinite,
    #[error("matrix not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("projection closed form requires left factor = constraint matrix")]
    FactorMismatch,
    #[error("retraction rank failure")]
    RetractionRank,
    #[error("not a descent direction")]
    NotDescent,
    #[error("zero Hessian eigenvalue")]
    ZeroEigenvalue,
    #[error("numerical spectrum requires a critical point (gradient norm {0:.3e})")]
    NotCritical(f64),
    #[error("non-isolated minimizer")]
    NonIsolated,
    #[error("damping failure in Gauss-Newton step")]
    Damping,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
