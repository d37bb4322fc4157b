//! Exact finite-discrete semiparametric calculus for fused data.
//!
//! An ideal law `Q` on a product of categorical axes is linked to several data sources by an
//! alignment collection: for each source, some conditionals of a block factorization of
//! its observed axes agree with those of `Q`. This crate builds the observed-data law, its
//! score operator and adjoint as dense matrices, computes influence functions and efficient
//! influence functions, implements worked fused-data frameworks, and provides estimation
//! and verification tooling.

pub mod discrete;
pub mod frameworks;
pub mod error;
pub mod estimation;
pub mod model;
pub mod influence;
pub mod score;
pub mod verify;

pub use discrete::{Axis, AxisSet, FinitePmf, PmfMode, RealTable};
pub use error::{Error, ErrorClass, Result};

/// Probability table with `f64` masses.
pub type Pmf = FinitePmf<f64>;
/// Real table with `f64` values.
pub type Table = RealTable<f64>;
/// A function on the observed cells, concatenated over sources in source order.
pub type ObsFunction = Vec<f64>;
/// A function on the cells of the ideal space.
pub type IdealFunction = Vec<f64>;
