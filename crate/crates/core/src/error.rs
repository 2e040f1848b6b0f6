use thiserror::Error;

use crate::grid::Representation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("n_points must be a power of two and at least 16, got {0}")]
    GridSize(usize),

    #[error("half_width must be positive and finite, got {0}")]
    HalfWidth(f64),

    #[error("amplitude vector has length {found}, grid has {expected} points")]
    Length { expected: usize, found: usize },

    #[error("expected {expected:?} representation, got {found:?}")]
    Representation {
        expected: Representation,
        found: Representation,
    },

    #[error("wave functions live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no classical turning points: v0 = {0} does not exceed 1")]
    NoTurningPoints(f64),

    #[error("substep count must be positive")]
    ZeroSubsteps,

    #[error("time step must be finite and non-negative, got {0}")]
    TimeStep(f64),

    #[error("dense oracle limited to {max} grid points, got {found}")]
    OracleGridTooLarge { found: usize, max: usize },

    #[error("invalid measurement schedule: {0}")]
    Schedule(String),

    #[error("initial packet placement: {0}")]
    Placement(String),

    #[error("{n} nonselective measurements would create 2^{n} branches; at most {max} allowed without pruning")]
    BranchGuard { n: usize, max: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
