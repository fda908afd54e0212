//! Pinned numerical conventions.  Every sign and normalization choice used
//! anywhere in the crate is recorded here; the other modules cite this file
//! instead of re-deriving.
//!
//! Coordinates and forms
//! ---------------------
//! * A torus of complex dimension n is the box [0,L₁)×…×[0,L_{2n}) with real
//!   axis 2α ↦ Re z_α and axis 2α+1 ↦ Im z_α, so ∂_α = (∂ₓ − i∂_y)/2 and
//!   ∂_ᾱ = (∂ₓ + i∂_y)/2.
//! * A (1,1)-form is stored as the n×n matrix M of the expansion
//!   √−1 Σ M_{αβ} dz^α ∧ dz̄^β ("Ω storage").  A real form has Hermitian M;
//!   the Kähler form ω itself is stored as the metric Gram matrix G.
//! * Curvature-type objects ∂̄(…) are stored "raw": the matrix C of
//!   Σ C_{αβ} dz^α ∧ dz̄^β without the √−1; the storages are related by
//!   C = i·M.  `contract_lambda` takes Ω storage, curvature contraction takes
//!   raw storage; both return tr(G⁻¹·).
//! * Λ_ω of an Ω-stored form is tr(G⁻¹M); hence Λ_ω ω = n exactly.
//! * √−1 Λ_ω ∂̄∂ φ = −Δφ/4 on the flat standard torus; its spectrum is ≥ 0.
//!
//! Metrics
//! -------
//! * Bundle metrics are stored as Hermitian positive Gram matrices G with
//!   pairing ⟨ξ,η⟩ = η†Gξ.  Compatibility across charts: G_i = φ_{ki}† G_k φ_{ki}
//!   where φ_{ki} maps chart-i frames to chart-k frames.
//! * The Chern connection in a chart is A = G⁻¹∂G (a (1,0) endomorphism form)
//!   and F = ∂̄A − B·Id for twist field B; the adjoint w.r.t. K is
//!   f^{*K} = G_K⁻¹ f† G_K.
//!
//! Integration
//! -----------
//! * Volume density: ω^n/n! = 2ⁿ·det(G)·dx (real coordinate Lebesgue measure),
//!   so the flat unit torus has volume 2ⁿ.
//! * deg E = ∫ c₁(E) ∧ ω^{n−1}/(n−1)!, with c₁ in Ω storage given by
//!   M_{c₁} = tr_End(C_F)/(2π) for raw curvature C_F.  With these choices the
//!   degree-d factor-of-automorphy line bundle on the unit 2-torus has degree
//!   exactly d.
//! * λ = 2π·deg(E)/(rank·Vol) and for that line bundle √−1Λ_ω F ≡ π d = λ.
//! * L² norms of sections and endomorphisms use the same density:
//!   ‖u‖² = ∫ |u|²_K ω^n/n!, with no extra volume normalization.
//!
//! Floors and tolerances
//! ---------------------
//! * `POSITIVITY_FLOOR` applies to eigenvalues of user-supplied metrics and of
//!   arguments entering spectral calculus (log, Ψ-kernels).  It is *not*
//!   applied to exp(s) states inside the flow: the unstable continuation drives
//!   |log h| past 300 and clamping there would silently change the dynamics.
//! * Finite-difference identities are judged against `fd_tol(h) = 10h²`; exact
//!   algebraic identities against `ALGEBRAIC_TOL`.

/// Eigenvalue floor for metrics and spectral-calculus inputs.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Tolerance for identities that hold exactly in exact arithmetic.
pub const ALGEBRAIC_TOL: f64 = 1e-10;

/// Budget for identities that hold up to the discretization order.
pub fn fd_tol(h: f64) -> f64 {
    10.0 * h * h
}

/// Relative spectral-gap threshold for eigenvalue clustering in the
/// destabilizing-subbundle probe.
pub const CLUSTER_GAP_FRACTION: f64 = 0.2;

/// Default factor for the Poisson solvability check: |∫f| ≤ factor·Vol.
pub const SOLVABILITY_TOL_FACTOR: f64 = 1e-9;

/// Sweep-level plateau classification: the continuation is flagged as
/// obstructed when the final √−1ΛF residual exceeds this absolute level…
pub const PLATEAU_RESIDUAL_ABS: f64 = 0.1;
/// …or this fraction of the residual at the first (largest) ε.
pub const PLATEAU_RESIDUAL_REL: f64 = 0.5;

/// Chart overlap halfwidth (grid points past the owned half-axis) for n = 1.
pub const OVERLAP_HALFWIDTH_N1: usize = 6;
/// Chart overlap halfwidth for n = 2 (smaller boxes, same stencil needs).
pub const OVERLAP_HALFWIDTH_N2: usize = 4;

/// Minimum points per axis for fourth-order stencils; below this the code
/// degrades to second order (and overlap halfwidths shrink accordingly).
pub const FOURTH_ORDER_MIN_POINTS: usize = 16;

/// Empirical envelope constant for the sup-vs-L¹ interior estimate
/// max|log h| ≤ C·(1 + ‖log h‖_{L¹}).  Not derived; measured over the test
/// family at desk resolutions and pinned with margin.
pub const SUP_FROM_L1_CONSTANT: f64 = 20.0;

/// Default damping-step floor for the outer flow.
pub const STEP_FLOOR: f64 = 1e-6;
