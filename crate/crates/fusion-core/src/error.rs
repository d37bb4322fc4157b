//! Error type shared by every module of the crate.

use thiserror::Error;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input: bad JSON, unknown names, inconsistent shapes.
    Input,
    /// Well-formed input that violates a model assumption (alignment, positivity of anchors).
    Validation,
    /// A numerical procedure could not deliver a result within tolerance.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate axis name `{0}`")]
    DuplicateAxis(String),
    #[error("axis `{0}` has no levels")]
    EmptyAxis(String),
    #[error("axis `{axis}` has duplicate level `{level}`")]
    DuplicateLevel { axis: String, level: String },
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{axis}` has no level `{level}`")]
    UnknownLevel { axis: String, level: String },
    #[error("level `{level}` of axis `{axis}` is not numeric")]
    NonNumericLevel { axis: String, level: String },
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("cell {0} has a negative or non-finite mass")]
    InvalidMass(usize),
    #[error("cell {0} has zero mass in strict mode")]
    ZeroMass(usize),
    #[error("conditioning cell {0} has zero mass")]
    ZeroConditioningMass(usize),
    #[error("invalid alignment specification: {0}")]
    InvalidSpec(String),
    #[error("alignment violated: {0}")]
    Misaligned(String),
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("DECOMPOSE failed at source {source_index}: relative residual {residual:.3e}")]
    DecomposeFail { source_index: usize, residual: f64 },
    #[error("target is not in the range of the operator: relative residual {0:.3e}")]
    NotInRange(f64),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Misaligned(_) | Error::Positivity(_) | Error::Degenerate(_) => {
                ErrorClass::Validation
            }
            Error::DecomposeFail { .. }
            | Error::NotInRange(_)
            | Error::Singular(_)
            | Error::ZeroConditioningMass(_) => ErrorClass::Numerical,
            _ => ErrorClass::Input,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
