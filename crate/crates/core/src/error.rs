use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state annihilated: output norm is zero")]
    Annihilated,

    #[error("truncation: {tail:.3e} of the weight sits at the cutoff, increase cutoff")]
    Truncation { tail: f64 },

    #[error("cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(usize, usize),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("zero success probability")]
    ZeroSuccess,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rejection envelope violated: ratio {ratio:.4} at beta = {beta}")]
    EnvelopeViolated { ratio: f64, beta: Complex64 },

    #[error("sample starvation at step {step}: only {available} samples")]
    Starvation { step: usize, available: usize },

    #[error("no pair survived the acceptance boundary")]
    NoSurvivors,

    #[error("likelihood underflow: occupied bin ({m}, {n}) floored for {iterations} iterations")]
    Underflow { m: i64, n: i64, iterations: usize },

    #[error("ill-conditioned matrix: condition number {0:.3e}")]
    IllConditioned(f64),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
