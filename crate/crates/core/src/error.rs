use thiserror::Error;

/// Errors raised by the modelling, solver and post-processing layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry conflict: {0}")]
    GeometryConflict(String),

    #[error("port cannot be resolved on the grid: {0}")]
    PortResolution(String),

    #[error("grid of {cells} cells needs about {estimate_mb:.0} MB, above the {budget_mb:.0} MB budget")]
    MemoryBudget {
        cells: usize,
        estimate_mb: f64,
        budget_mb: f64,
    },

    #[error("solver diverged at step {step}: |field| = {magnitude:e}")]
    Diverged { step: usize, magnitude: f64 },

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("invalid equivalence surface: {0}")]
    InvalidSurface(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("averaging region too small: {0}")]
    RegionTooSmall(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Fails with `InvalidArgument` unless `value` is finite and strictly positive.
pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {value}")))
    }
}
