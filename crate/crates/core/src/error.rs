use thiserror::Error;

/// Errors raised by the solvers and kernel machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wavenumber {l} exceeds the series truncation l_max = {l_max}")]
    OutOfRange { l: usize, l_max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel cannot be evaluated pointwise: {0}")]
    UnsupportedEvaluation(String),

    #[error("direct lattice sum did not converge (tail bound {tail:.3e} > {tol:.3e})")]
    Accuracy { tail: f64, tol: f64 },

    #[error("no sign change of the test function over [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular interaction: {0}")]
    Singularity(String),

    #[error("Newton iteration did not converge after {iterations} steps (residual history {history:?})")]
    NoConvergence { iterations: usize, history: Vec<f64> },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String, last_state: Vec<f64> },

    #[error("unsupported ansatz: {0}")]
    UnsupportedAnsatz(String),

    #[error("resonance: {0}")]
    Resonance(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("time step {dt} violates the stability bound, suggested dt = {suggested}")]
    StepRejected { dt: f64, suggested: f64 },

    #[error("singular linear system: {0}")]
    SingularMatrix(String),
}

pub type Result<T> = std::result::Result<T, Error>;
