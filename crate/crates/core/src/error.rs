use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mass mismatch: {m0} vs {m1}")]
    MassMismatch { m0: f64, m1: f64 },

    #[error("measure has zero mass")]
    ZeroMass,

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("negative density {value} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNonConvergence { iterations: usize, residual: f64 },

    #[error("particle {particle} left the bounding box at t = {t}")]
    OutOfBounds { particle: usize, t: f64 },

    #[error("geodesic carries no transported charge")]
    NoTransport,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
