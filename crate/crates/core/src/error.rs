use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("equilibrium speed must be non-zero in the phase-transition gain map")]
    ZeroEquilibriumSpeed,

    #[error("vehicle {vehicle} collided with its leader at t = {t:.4} s (gap {gap:.6} m)")]
    Collision { t: f64, vehicle: usize, gap: f64 },

    #[error("degenerate jump: left and right densities are equal ({0})")]
    DegenerateJump(f64),

    #[error("time {t} lies outside trajectory of vehicle {vehicle} ([{start}, {end}])")]
    OutOfRange {
        vehicle: usize,
        t: f64,
        start: f64,
        end: f64,
    },

    #[error("density became non-positive in cell {cell} at t = {t:.6} s (rho = {rho})")]
    Positivity { cell: usize, t: f64, rho: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("requested {requested} modes but only {available} frequency bins are available")]
    TooManyModes { requested: usize, available: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
