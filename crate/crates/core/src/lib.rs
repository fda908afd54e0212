//! Numerical study of twisted holomorphic vector bundles over flat complex tori.
//!
//! The crate represents a bundle as Čech gluing data on an explicit chart cover
//! of a discretized torus (complex dimension 1 or 2), together with optional
//! B-field twist data (B_i, β_ij, α_ijk).  On top of that it provides
//!
//! * Hermitian metrics on the bundle, Chern connections and curvature,
//! * Chern–Weil integrals (degree, slope, c₂-type numbers, Bogomolov checks),
//! * a damped continuation solver for the ε-perturbed Hermitian–Einstein
//!   equation  √−1 Λ_ω F_H − λ·Id + ε·log h = 0,  H = K·exp(log h),
//! * integral and pointwise diagnostics for the a-priori estimates that govern
//!   the ε → 0 limit, and
//! * a spectral projector probe that extracts destabilizing subbundle data
//!   from the blow-up profile of log h on unstable bundles.
//!
//! All conventions (form storage, the sign of Λ∂̄∂, volume normalization,
//! degree normalization) are pinned in [`constants`].

pub mod constants;
pub mod error;
pub mod linalg;
pub mod grid;
pub mod fft;
pub mod geometry;
pub mod twist;
pub mod bundle;
pub mod chern;
pub mod solver;
pub mod stability;
pub mod config;
pub mod container;
pub mod report;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
