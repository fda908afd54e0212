//! Twisted bundles as multiplier systems, Hermitian metric families, Chern
//! connections, twisted curvature, and the spectral calculus on endomorphism
//! fields.

mod connection;
mod field;
mod metric;
mod spectral;
mod transition;

pub use connection::{
    chern_connection, curvature, curvature_incremental, lambda_f, ConnectionReport,
    CurvatureReport, LambdaReport,
};
pub(crate) use connection::box_wirtinger;

pub use field::{
    chart_endo, chart_form, gather_owned, ChartMatrixField, EndForm, EndoField, FormKind,
    OwnerIndex,
};
pub use metric::{
    build_compatible_metric, chart_weight, compatibility_defect, MetricField, MetricSeed,
};
pub use spectral::{
    dexp_kernel, eigenvalue_globality_defect, endo_exp, endo_log, point_eig, point_fun,
    point_psi, psi_apply, psi_apply_form, Kernel2,
};
pub use transition::{
    attach_twist, build_clock_shift_bundle, build_direct_sum, build_theta_bundle,
    build_trivial_bundle, default_cover, validate_bundle, Block, BundleReport, PairTransitions,
    TwistedBundle,
};
