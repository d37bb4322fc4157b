//! Exact probability arithmetic on finite product spaces: marginals, conditionals,
//! Radon-Nikodym ratios, `L^2` inner products and conditional-expectation operators.
//!
//! Tables are generic over the scalar type; the operator layers above use `f64`.

pub mod axes;
pub mod json;
pub mod linalg;
pub mod ops;
pub mod pmf;

pub use axes::{Axis, AxisSet, Projection};
pub use ops::{
    cond_exp_operator, conditional, l2_inner, marginal, mutually_abs_continuous, rn_ratio,
    LinearOpMatrix,
};
pub use pmf::{FinitePmf, PmfMode, RealTable, MASS_FLOOR};

/// Default absolute tolerance for comparisons of probabilities and function values.
pub const DEFAULT_TOL: f64 = 1e-9;
