//! Fused-data models: alignment collections, observed laws assembled from an ideal law and
//! free source laws, and alignment checks.

pub mod align;
pub mod file;
pub mod law;
pub mod spec;

pub use align::{
    c_equivalent, check_alignment, check_alignment_tol, check_strong_alignment, AlignmentReport,
    BlockDiscrepancy, StrongBounds,
};
pub use file::{LoadedModel, ModelFile};
pub use law::{assemble_observed_law, canonical_u, FusedLaw};
pub use spec::{AlignmentSpec, CompiledSpec, Region, SourceChain, SourceSpec};
