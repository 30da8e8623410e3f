use thiserror::Error;

/// Errors raised by the channel model, modulation and detection routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coincident coil centers at ({0:.3e}, {1:.3e}, {2:.3e})")]
    CoincidentCoils(f64, f64, f64),

    #[error("matrix is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range [{lo}, {hi}]")]
    Index { index: usize, lo: usize, hi: usize },

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("perturbation denominator vanishes ({0:.3e})")]
    PerturbationSingular(f64),

    #[error("resonance singularity at eigenvalue {lambda:.6e} (index {index})")]
    EigenSingular { index: usize, lambda: f64 },

    #[error("non-physical power {0:.6e} W")]
    NegativePower(f64),

    #[error("degenerate constellation: symbol {0} has zero power")]
    DegenerateSymbol(usize),

    #[error("wrong frequency plan mode: expected {0}")]
    PlanMode(&'static str),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
