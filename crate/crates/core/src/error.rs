use thiserror::Error;

/// Errors raised by the geometry, dynamics, Jacobi and index machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("metric is not positive definite at {x:?}")]
    DegenerateMetric { x: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point is not on the hypersurface (rho = {rho:e})")]
    OffSurface { rho: f64 },

    #[error("hypersurface defining function has vanishing gradient at {x:?}")]
    DegenerateSurface { x: Vec<f64> },

    #[error("vector is not tangent to the hypersurface (normal component {normal:e})")]
    NotTangent { normal: f64 },

    #[error("tangential contact with the hypersurface at t = {time} (normal speed {normal_speed:e})")]
    Tangency { time: f64, normal_speed: f64 },

    #[error("step size collapsed to {h:e} at t = {t}")]
    StepSizeCollapse { t: f64, h: f64 },

    #[error("more than {limit} hypersurface events")]
    MaxEventsExceeded { limit: usize },

    #[error("event policy exhausted at crossing #{crossing}")]
    PolicyExhausted { crossing: usize },

    #[error("transmission through a boundary hypersurface is not allowed")]
    TransmitThroughBoundary,

    #[error("no hypersurface configured")]
    NoSurface,

    #[error("Newton iteration did not converge after {iterations} iterations (miss {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("endpoint map is singular (relative singular value {sigma_ratio:e}); endpoints are conjugate")]
    ConjugateEndpoint { sigma_ratio: f64 },

    #[error("base point is conjugate to itself along the orbit (relative singular value {sigma_ratio:e})")]
    SelfConjugate { sigma_ratio: f64 },

    #[error("invalid variation field: {0}")]
    InvalidField(String),

    #[error("conjugate point scan grid too coarse near t in [{t_lo}, {t_hi}]")]
    GridTooCoarse { t_lo: f64, t_hi: f64 },

    #[error("node spacing too coarse in gap {gap}: {reason}")]
    RefineNodes { gap: usize, reason: String },

    #[error("index not stable under node refinement: {table:?}")]
    InconclusiveIndex { table: Vec<(usize, usize, usize)> },

    #[error("the potential is not C1 across the hypersurface: {0}")]
    NotC1(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
