use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right} interior nodes")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field has {got} values but the grid has {expected} interior nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("field value at node {node} is not finite")]
    NonFinite { node: usize },

    #[error("non-degeneracy violated: forcing g = {value} <= 1 at node {node} (x = {x})")]
    NonDegenerate { node: usize, x: f64, value: f64 },

    #[error("noise modes {i} and {j} are not orthogonal (relative inner product {relative:e})")]
    NotOrthogonal { i: usize, j: usize, relative: f64 },

    #[error("explicit step violates the stability bound: dt = {dt:e} > {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("initial data are not ordered: x0 > y0 at node {node}")]
    Unordered { node: usize },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
