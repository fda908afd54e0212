//! Chart covers of the discretized torus and Čech twist data (B_i, β_ij,
//! α_ijk), with validation and canonical builders.

mod cover;
mod data;

pub use cover::{Chart, ChartCover, Region};
pub use data::{
    box_index, build_clock_shift_twist, build_global_b, build_trivial_twist, coboundary_search,
    validate_twist, ChartForm11, PairData, SparseForm10, SparseScalar, TripleData, TwistData,
    TwistReport, TwistTolerances,
};
pub(crate) use data::{clock_transition_word, region_wirtinger, sparse_slot};
