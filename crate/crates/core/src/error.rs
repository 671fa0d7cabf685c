use thiserror::Error;

use crate::map::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("branch coefficients are not finite")]
    NonFinite,

    #[error("branch degree {degree} exceeds the maximum {max}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error("branches disagree at the critical point: left {left}, right {right}")]
    Discontinuous { left: f64, right: f64 },

    #[error("direction field does not vanish on the boundary: v(-1) = {at_minus}, v(1) = {at_plus}")]
    BoundaryNonZero { at_minus: f64, at_plus: f64 },

    #[error("a side selector is required for derivative order {order} at the critical point")]
    SideRequired { order: usize },

    #[error("point {x} lies outside [-1, 1]")]
    OutOfInterval { x: f64 },

    #[error("parameter {t} lies outside the family domain [{lo}, {hi}]")]
    ParameterOutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("map is not a piecewise expanding unimodal map: {}", .0.summary())]
    InvalidMap(Box<ValidationReport>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("orbit enters the critical band at index {index}")]
    CriticalBand { index: usize },

    #[error("critical point is not periodic within the search depth")]
    NotPeriodic,

    #[error("map is not good (margin {margin})")]
    NotGood { margin: f64 },

    #[error("transversal direction is degenerate: |J(f, w)| = {j_w} <= {tol}")]
    DegenerateDirection { j_w: f64, tol: f64 },

    #[error("expansivity certification failed: {0}")]
    Certification(String),

    #[error("Newton iteration failed after {iterations} steps (residual {residual})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("prime period changed at node {node}: expected {expected}, found {found:?}")]
    PeriodChange {
        node: usize,
        expected: usize,
        found: Option<usize>,
    },

    #[error("kneading sequence changed at t = {t} (first difference at symbol {index})")]
    KneadingDrift { t: f64, index: usize },

    #[error("itinerary prefix is not admissible (empty cylinder at symbol {index})")]
    NoPoint { index: usize },

    #[error("no transversal direction found in the dictionary")]
    NoTransversal,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for internal-consistency failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            _ => 1,
        }
    }
}
