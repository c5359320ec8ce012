use thiserror::Error;

/// Errors raised by field construction, simulation, cutoff and covering
/// generation, flux analysis and verdict evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: N = {n} (need a power of two >= 16), L = {l} (need L > 0)")]
    InvalidGrid { n: usize, l: f64 },

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("vorticity has nonzero mean {mean:e} (max |w| = {max:e})")]
    NonZeroMean { mean: f64, max: f64 },

    #[error("CFL violation at step {step} (t = {t}): dt = {dt:e} exceeds 0.5 dx / max|u| = {limit:e}")]
    Cfl { step: usize, t: f64, dt: f64, limit: f64 },

    #[error("solution became non-finite at step {step} (t = {t})")]
    Blowup { step: usize, t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid cutoff: {0}")]
    Cutoff(String),

    #[error("covering validation failed: {reason} (n = {n}, multiplicity = {multiplicity})")]
    Covering { reason: String, n: usize, multiplicity: usize },

    #[error("averaging horizon too short: {0}")]
    Horizon(String),

    #[error("undefined scale: {0}")]
    UndefinedScale(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
