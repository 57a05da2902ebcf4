use thiserror::Error;

pub type Result<T> = std::result::Result<T, DiracError>;

#[derive(Debug, Error)]
pub enum DiracError {
    #[error("truncation order must be at least 1")]
    ZeroOrder,

    #[error("invalid spin structure component {0} (expected 0 or 1)")]
    InvalidSpinStructure(u8),

    #[error("mode set mismatch: {0}")]
    ModeSetMismatch(String),

    #[error("grid size {got} is too small, need at least {need}")]
    GridTooSmall { got: usize, need: usize },

    #[error("weight matrix is not positive definite at t = {t}")]
    NotPositiveDefinite { t: f64 },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("eigenpair residual {residual:.3e} exceeds bound {bound:.3e}")]
    ResidualTooLarge { residual: f64, bound: f64 },

    #[error("reality constraint violated at m = {m:?}: |f(m) - conj f(-m)| = {deviation:.3e}")]
    RealityViolation { m: [i32; 3], deviation: f64 },

    #[error("field is not normalized: |phi|^2 = {0}")]
    NotNormalized(f64),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cluster at lambda = {lambda} is not isolated at t = {t} (gap {gap:.3e}, mismatch {mismatch:.3e})")]
    ClusterNotIsolated {
        lambda: f64,
        t: f64,
        gap: f64,
        mismatch: f64,
    },

    #[error("no candidate factor splits the cluster at lambda = {lambda} ({tried} candidates tried)")]
    SplitExhausted {
        lambda: f64,
        tried: usize,
        table: Vec<crate::experiments::CandidateRates>,
    },

    #[error("k = {k} is outside the trustworthy part of the truncated spectrum: {reason}")]
    UntrustedRange { k: usize, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DiracError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            DiracError::NotPositiveDefinite { .. } => 2,
            DiracError::ZeroOrder
            | DiracError::InvalidSpinStructure(_)
            | DiracError::ModeSetMismatch(_)
            | DiracError::GridTooSmall { .. }
            | DiracError::RealityViolation { .. }
            | DiracError::NotNormalized(_)
            | DiracError::NotUnitary(_)
            | DiracError::Precondition(_)
            | DiracError::UntrustedRange { .. }
            | DiracError::InvalidInput(_)
            | DiracError::Json(_) => 3,
            _ => 1,
        }
    }
}
