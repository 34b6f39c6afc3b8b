use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalibError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibError {
    /// Translation is (nearly) parallel to the optical axis, so the
    /// rectified x-axis cannot be constructed.
    #[error("baseline direction is parallel to the optical axis")]
    DegenerateBaseline,

    /// A ray lands on (or behind) the rotated principal plane.
    #[error("point lies on or behind the rectified principal plane (r3·q = {depth:e})")]
    PointAtHorizon { depth: f64 },

    #[error("only {usable} usable correspondences, at least {required} required")]
    TooFewPairs { usable: usize, required: usize },

    #[error("normal equations are not positive definite")]
    NumericalFailure,

    /// Unit vectors cancel out and have no meaningful mean direction.
    #[error("unit vectors sum to (almost) zero: |sum| = {norm:e}")]
    DegenerateSum { norm: f64 },

    #[error("found only {found} co-visible points out of {requested} requested")]
    InsufficientVisibility { found: usize, requested: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
