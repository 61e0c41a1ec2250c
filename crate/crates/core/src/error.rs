use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("non-integral span on axis {axis}: ({hi} - {lo}) / {h} is not an integer")]
    NonIntegralSpan { axis: usize, lo: f64, hi: f64, h: f64 },

    #[error("half-space bound violated: {0}")]
    HalfSpaceBound(String),

    #[error("function is undefined at node {coords:?}: {reason}")]
    UndefinedSample { coords: Vec<f64>, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty cube family")]
    EmptyFamily,

    #[error("cube (center {center:?}, side {side}) is outside the grid")]
    CubeOutsideGrid { center: Vec<f64>, side: f64 },

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("point {0:?} is outside the operator's domain")]
    PointOutsideDomain(Vec<f64>),

    #[error("insufficient grid coverage at t = {t}: kernel tail mass outside the grid is {tail_mass:.3e}, needs margin {needed_margin:.4} beyond the targets")]
    InsufficientCoverage { t: f64, tail_mass: f64, needed_margin: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("kernel is singular at x = y")]
    SingularKernel,

    #[error("grid cannot be transformed: {0}")]
    NonTransformable(String),

    #[error("Mellin integral diverges: {0}")]
    DivergentMellin(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
