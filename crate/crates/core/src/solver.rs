//! ε-continuation for the perturbed Hermitian–Einstein equation.
//!
//! With background metric K, unknown h = K⁻¹H ∈ Herm⁺(E,K) and s = log h,
//! the regularized equation reads
//!
//!   L_ε(h) = √−1 Λ_ω F_H − λ·Id + ε·s = 0,   H = K·exp(s),  ε ∈ (0,1],
//!
//! and is solved by damped explicit descent
//!
//!   s ← s − η·P( sym_K(√−1Λ_ωF_H − λ·Id + ε·s) ).
//!
//! P is a Fourier preconditioner dividing each matrix entry by q(k) + ε,
//! where q(k) is the exact symbol of the stencil operator √−1Λ_ω̃∂̄∂ (the
//! linearization of the left side at s = 0 on a flat background).  On
//! commuting data P inverts the linearization exactly and the flow lands in a
//! handful of steps; elsewhere it only accelerates, and the damping contract
//! (halve η on a residual increase, grow by 1.2 after 5 accepted steps, floor
//! `STEP_FLOOR`) keeps accepted residuals non-increasing.  λ is computed once
//! per solve from the background degree and never re-estimated.
//!
//! The L² norm used by the energy identity is ‖X‖² = ∫ |X|²_K ω^n/n!.

use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

use crate::bundle::{
    box_wirtinger, chart_endo, chern_connection, curvature, dexp_kernel, lambda_f, point_fun,
    psi_apply_form, EndForm, EndoField, FormKind, MetricField, OwnerIndex, TwistedBundle,
};
use crate::chern;
use crate::constants::{fd_tol, PLATEAU_RESIDUAL_ABS, PLATEAU_RESIDUAL_REL, STEP_FLOOR,
    SUP_FROM_L1_CONSTANT};
use crate::error::Error;
use crate::fft::{fft_nd, wavenumber};
use crate::geometry::TorusGeometry;
use crate::grid::StencilOrder;
use crate::linalg;
use crate::Result;

/// Step-size adaptation for the damped flow.
#[derive(Debug, Clone, Copy)]
pub struct DampingPolicy {
    pub shrink: f64,
    pub grow: f64,
    /// Accepted steps in a row before η is allowed to grow.
    pub patience: usize,
    pub floor: f64,
}

impl Default for DampingPolicy {
    fn default() -> DampingPolicy {
        DampingPolicy { shrink: 0.5, grow: 1.2, patience: 5, floor: STEP_FLOOR }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub epsilon: f64,
    /// Initial η; capped at 1 (a full preconditioned step).
    pub step_size: f64,
    pub max_iters: usize,
    /// Sup-norm target for |sym_K L_ε(h)|_K.
    pub residual_tol: f64,
    pub damping: DampingPolicy,
}

impl SolverOptions {
    pub fn new(epsilon: f64) -> SolverOptions {
        SolverOptions {
            epsilon,
            step_size: 1.0,
            max_iters: 400,
            residual_tol: 1e-8,
            damping: DampingPolicy::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0,1]", self.epsilon)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::Config("residual_tol must be positive".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        Ok(())
    }
}

/// How a single ε-solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    /// Residual stalled above 100·residual_tol with the step at its floor.
    Plateau,
    IterationLimit,
}

/// Per-iteration history and end-state diagnostics of one ε-solve.  The
/// history vectors are aligned: `residuals`, `max_logs` and `det_drifts` hold
/// iterate 0 plus one entry per accepted step; `step_sizes` holds the η of
/// each accepted step.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub epsilon: f64,
    pub residuals: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub max_logs: Vec<f64>,
    pub det_drifts: Vec<f64>,
    pub rejected: usize,
    pub outcome: Outcome,
    /// sup_p |s|_K at the final iterate.
    pub max_log_h: f64,
    /// sup_p |det h − 1| at the final iterate (det h = e^{tr s}).
    pub det_drift: f64,
    /// sup_p |√−1Λ_ωF_H − λ·Id|_H at the final iterate.
    pub phi_residual: f64,
    /// sup_p |s − s^{*K}| over the flow state (symmetrization health).
    pub sym_defect: f64,
    pub log_bounds: Option<LogBoundReport>,
    pub energy: Option<EnergyIdentityReport>,
}

/// A finished ε-solve: H = K·exp(s) plus its trace.
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub metric: MetricField,
    pub s: EndoField,
    pub trace: SolverTrace,
}

/// Owner-gauge lookups shared by one solve: chart/box of each grid point and
/// G_K⁻¹ there.
struct Frame {
    own: OwnerIndex,
    kinv: Vec<C64>,
}

fn build_frame(bundle: &TwistedBundle, k: &MetricField) -> Result<Frame> {
    let own = OwnerIndex::build(bundle.cover());
    let rr = k.r * k.r;
    let npts = bundle.grid().npoints();
    let mut kinv = vec![C64::new(0.0, 0.0); npts * rr];
    for p in 0..npts {
        let g = k.gram(own.owner[p] as usize, own.box_idx[p] as usize);
        let inv = linalg::inverse(k.r, g)?;
        kinv[p * rr..(p + 1) * rr].copy_from_slice(&inv);
    }
    Ok(Frame { own, kinv })
}

impl Frame {
    fn gram<'a>(&self, k: &'a MetricField, p: usize) -> &'a [C64] {
        k.gram(self.own.owner[p] as usize, self.own.box_idx[p] as usize)
    }

    fn inv(&self, r: usize, p: usize) -> &[C64] {
        &self.kinv[p * r * r..(p + 1) * r * r]
    }
}

fn adj_g(r: usize, ginv: &[C64], g: &[C64], x: &[C64]) -> Vec<C64> {
    linalg::mul3(r, ginv, &linalg::adjoint(r, x), g)
}

fn sym_g(r: usize, ginv: &[C64], g: &[C64], x: &[C64]) -> Vec<C64> {
    let a = adj_g(r, ginv, g, x);
    x.iter().zip(&a).map(|(u, v)| 0.5 * (u + v)).collect()
}

/// Hilbert–Schmidt norm √tr(X^{*G} X).
fn hs_g(r: usize, ginv: &[C64], g: &[C64], x: &[C64]) -> f64 {
    let t = linalg::trace(r, &linalg::mul(r, &adj_g(r, ginv, g, x), x)).re;
    t.max(0.0).sqrt()
}

/// Re-symmetrize an owner-gauge field w.r.t. K in place.
fn sym_field(frame: &Frame, k: &MetricField, x: &mut EndoField) {
    let r = x.r;
    for p in 0..x.npoints() {
        let s = sym_g(r, frame.inv(r, p), frame.gram(k, p), x.at(p));
        x.at_mut(p).copy_from_slice(&s);
    }
}

/// H = K·exp(s) as a compatible metric field; s must be K-self-adjoint.
pub fn metric_exp(bundle: &TwistedBundle, k: &MetricField, s: &EndoField) -> Result<MetricField> {
    let cover = bundle.cover();
    let r = k.r;
    let rr = r * r;
    let mut out = k.clone();
    for c in 0..cover.charts.len() {
        let view = chart_endo(bundle, s, c);
        for b in 0..cover.charts[c].box_points() {
            let e = point_fun(r, k.gram(c, b), &view[b * rr..(b + 1) * rr], f64::exp)?;
            let g = linalg::mul(r, k.gram(c, b), &e);
            let gm = out.gram_mut(c, b);
            for i in 0..r {
                for j in 0..r {
                    gm[i * r + j] = 0.5 * (g[i * r + j] + g[j * r + i].conj());
                }
            }
        }
    }
    Ok(out)
}

fn stencil_sigma(order: StencilOrder, th: f64) -> f64 {
    if th == 0.0 {
        return 1.0;
    }
    match order {
        StencilOrder::Second => th.sin() / th,
        StencilOrder::Fourth => (8.0 * th.sin() - (2.0 * th).sin()) / (6.0 * th),
    }
}

/// Exact Fourier symbol of the stencil √−1Λ_ω̃∂̄∂ at one frequency bin:
/// the continuum formula with each wavenumber replaced by k·σ(kh).
fn flow_symbol(geo: &TorusGeometry, coords: &[usize]) -> f64 {
    let grid = &geo.grid;
    let n = grid.n;
    let order = grid.stencil_order();
    let binv = geo.base_inverse();
    let mut sig = vec![C64::new(0.0, 0.0); n];
    for a in 0..n {
        let modified = |axis: usize| {
            let k = wavenumber(coords[axis], grid.dims[axis], grid.periods[axis]);
            k * stencil_sigma(order, k * grid.spacing[axis])
        };
        let kx = modified(2 * a);
        let ky = modified(2 * a + 1);
        sig[a] = C64::new(ky / 2.0, kx / 2.0);
    }
    let mut q = C64::new(0.0, 0.0);
    for b in 0..n {
        for a in 0..n {
            q += binv[b * n + a] * sig[a] * sig[b].conj();
        }
    }
    q.re
}

fn symbol_table(geo: &TorusGeometry) -> Vec<f64> {
    (0..geo.grid.npoints()).map(|p| flow_symbol(geo, &geo.grid.coords(p))).collect()
}

/// Divide each matrix entry by q(k) + ε in frequency space.
fn precondition(geo: &TorusGeometry, qtab: &[f64], eps: f64, x: &EndoField) -> EndoField {
    let grid = &geo.grid;
    let npts = grid.npoints();
    let rr = x.r * x.r;
    let mut out = EndoField::zeros(npts, x.r);
    let mut line = vec![C64::new(0.0, 0.0); npts];
    for e in 0..rr {
        for p in 0..npts {
            line[p] = x.data[p * rr + e];
        }
        fft_nd(&mut line, &grid.dims, false);
        for p in 0..npts {
            line[p] /= C64::new(qtab[p] + eps, 0.0);
        }
        fft_nd(&mut line, &grid.dims, true);
        for p in 0..npts {
            out.data[p * rr + e] = line[p];
        }
    }
    out
}

/// √−1Λ_ωF_K − λ·Id in owner gauge, with λ = 2π·deg/(r·Vol) from the same
/// discrete curvature.
fn background_phi(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    own: &OwnerIndex,
) -> Result<(EndoField, f64)> {
    let (conn, _) = chern_connection(bundle, k)?;
    let (curv, _) = curvature(bundle, &conn)?;
    let (lam, _) = lambda_f(bundle, geo, k, &curv, own)?;
    let c1 = chern::c1_form(bundle, &curv, own);
    let deg = chern::degree(geo, &c1);
    let lambda = TAU * deg / (bundle.rank as f64 * geo.volume());
    let mut phi = lam;
    let r = phi.r;
    for p in 0..phi.npoints() {
        let x = phi.at_mut(p);
        for i in 0..r {
            x[i * r + i] -= lambda;
        }
    }
    Ok((phi, lambda))
}

/// Conformal rescale e^φ·K with tr(√−1Λ_ωF − λ·Id) driven to zero.
///
/// One Poisson solve leaves the stencil-truncation floor of the curvature
/// pipeline (the measured trace residual of a smooth metric is O(h⁴), not 0),
/// so the correction is iterated to the discrete fixed point; without that the
/// unit-determinant identity for the subsequent flow would hold only to the
/// truncation floor instead of solver precision.
pub fn normalize_background(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
) -> Result<MetricField> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    if geo.grid.dims != grid.dims {
        return Err(Error::ShapeMismatch("geometry grid vs bundle grid".into()));
    }
    let own = OwnerIndex::build(cover);
    let npts = grid.npoints();
    let r = k.r;
    let mut out = k.clone();
    for _pass in 0..8 {
        let (phi, _) = background_phi(bundle, geo, &out, &own)?;
        let f: Vec<f64> =
            (0..npts).map(|p| -linalg::trace(r, phi.at(p)).re / r as f64).collect();
        let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup <= 1e-11 {
            break;
        }
        let u = geo.poisson_solve(&f, None)?;
        for c in 0..cover.charts.len() {
            let chart = &cover.charts[c];
            for b in 0..chart.box_points() {
                let p = grid.flat(&chart.torus_coords(&grid.dims, b));
                let scale = C64::new(u[p].exp(), 0.0);
                for v in out.gram_mut(c, b) {
                    *v *= scale;
                }
            }
        }
    }
    Ok(out)
}

struct Eval {
    metric: MetricField,
    lam: EndoField,
    resid: EndoField,
    sup: f64,
}

fn evaluate(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    frame: &Frame,
    k: &MetricField,
    lambda: f64,
    eps: f64,
    s: &EndoField,
) -> Result<Eval> {
    let metric = metric_exp(bundle, k, s)?;
    let (conn, _) = chern_connection(bundle, &metric)?;
    let (curv, _) = curvature(bundle, &conn)?;
    let (lam, _) = lambda_f(bundle, geo, &metric, &curv, &frame.own)?;
    let r = k.r;
    let npts = s.npoints();
    let mut resid = EndoField::zeros(npts, r);
    let mut sup = 0.0f64;
    for p in 0..npts {
        let g = frame.gram(k, p);
        let ginv = frame.inv(r, p);
        let mut x = lam.at(p).to_vec();
        for i in 0..r {
            x[i * r + i] -= lambda;
        }
        for (xi, si) in x.iter_mut().zip(s.at(p)) {
            *xi += eps * si;
        }
        let sx = sym_g(r, ginv, g, &x);
        let norm = hs_g(r, ginv, g, &sx);
        if !norm.is_finite() {
            return Err(Error::NonFinite("flow residual".into()));
        }
        sup = sup.max(norm);
        resid.at_mut(p).copy_from_slice(&sx);
    }
    Ok(Eval { metric, lam, resid, sup })
}

fn max_log(frame: &Frame, k: &MetricField, s: &EndoField) -> f64 {
    let r = s.r;
    (0..s.npoints())
        .map(|p| hs_g(r, frame.inv(r, p), frame.gram(k, p), s.at(p)))
        .fold(0.0, f64::max)
}

fn det_drift_of(s: &EndoField) -> f64 {
    let r = s.r;
    (0..s.npoints())
        .map(|p| (linalg::trace(r, s.at(p)).exp() - C64::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max)
}

pub fn solve_perturbed(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    opts: &SolverOptions,
) -> Result<SolveRun> {
    solve_perturbed_from(bundle, geo, k, opts, None)
}

/// Same flow, warm-started from a previous log-state.  The unit-determinant
/// identity det h = 1 is only guaranteed when K is trace-normalized
/// (`normalize_background`); the solve itself accepts any compatible K.
pub fn solve_perturbed_from(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    opts: &SolverOptions,
    init: Option<&EndoField>,
) -> Result<SolveRun> {
    opts.validate()?;
    let grid = bundle.grid();
    if geo.grid.dims != grid.dims {
        return Err(Error::ShapeMismatch("geometry grid vs bundle grid".into()));
    }
    let r = bundle.rank;
    let npts = grid.npoints();
    let eps = opts.epsilon;
    let frame = build_frame(bundle, k)?;
    let (_, lambda) = background_phi(bundle, geo, k, &frame.own)?;
    let qtab = symbol_table(geo);

    let mut s = match init {
        Some(x) => {
            if x.r != r || x.npoints() != npts {
                return Err(Error::ShapeMismatch("warm-start field shape".into()));
            }
            x.clone()
        }
        None => EndoField::zeros(npts, r),
    };
    sym_field(&frame, k, &mut s);

    let mut ev = evaluate(bundle, geo, &frame, k, lambda, eps, &s)?;
    let mut residuals = vec![ev.sup];
    let mut step_sizes = Vec::new();
    let mut max_logs = vec![max_log(&frame, k, &s)];
    let mut det_drifts = vec![det_drift_of(&s)];
    let mut rejected = 0usize;
    let pol = opts.damping;
    let mut eta = opts.step_size.min(1.0);
    let mut streak = 0usize;
    let mut outcome = Outcome::IterationLimit;

    if ev.sup <= opts.residual_tol {
        outcome = Outcome::Converged;
    } else {
        for _ in 0..opts.max_iters {
            let dir = precondition(geo, &qtab, eps, &ev.resid);
            let mut cand = s.clone();
            for (c, d) in cand.data.iter_mut().zip(&dir.data) {
                *c -= eta * d;
            }
            sym_field(&frame, k, &mut cand);
            let step = match evaluate(bundle, geo, &frame, k, lambda, eps, &cand) {
                Ok(cev) if cev.sup <= ev.sup * (1.0 + 1e-12) => Some(cev),
                Ok(_) => None,
                Err(Error::NonFinite(_)) | Err(Error::PositivityFloor { .. }) => None,
                Err(e) => return Err(e),
            };
            match step {
                Some(cev) => {
                    s = cand;
                    ev = cev;
                    residuals.push(ev.sup);
                    step_sizes.push(eta);
                    max_logs.push(max_log(&frame, k, &s));
                    det_drifts.push(det_drift_of(&s));
                    streak += 1;
                    if streak >= pol.patience {
                        eta = (eta * pol.grow).min(1.0);
                        streak = 0;
                    }
                    if ev.sup <= opts.residual_tol {
                        outcome = Outcome::Converged;
                        break;
                    }
                }
                None => {
                    rejected += 1;
                    streak = 0;
                    eta *= pol.shrink;
                    if eta < pol.floor {
                        outcome = if ev.sup > 100.0 * opts.residual_tol {
                            Outcome::Plateau
                        } else {
                            Outcome::IterationLimit
                        };
                        break;
                    }
                }
            }
        }
    }

    let phi_residual = {
        let mut sup = 0.0f64;
        for p in 0..npts {
            let gh = frame.gram(&ev.metric, p);
            let ghinv = linalg::inverse(r, gh)?;
            let mut x = ev.lam.at(p).to_vec();
            for i in 0..r {
                x[i * r + i] -= lambda;
            }
            sup = sup.max(hs_g(r, &ghinv, gh, &x));
        }
        sup
    };
    let sym_defect = {
        let mut sup = 0.0f64;
        for p in 0..npts {
            let a = adj_g(r, frame.inv(r, p), frame.gram(k, p), s.at(p));
            let d: Vec<C64> = s.at(p).iter().zip(&a).map(|(u, v)| u - v).collect();
            sup = sup.max(linalg::sup_entry(&d));
        }
        sup
    };
    let log_bounds = Some(check_log_h_bounds(bundle, geo, k, &s, eps)?);
    let energy = Some(check_energy_identity(bundle, geo, k, &s, eps, opts.residual_tol)?);

    let trace = SolverTrace {
        epsilon: eps,
        max_log_h: *max_logs.last().unwrap(),
        det_drift: *det_drifts.last().unwrap(),
        residuals,
        step_sizes,
        max_logs,
        det_drifts,
        rejected,
        outcome,
        phi_residual,
        sym_defect,
        log_bounds,
        energy,
    };
    Ok(SolveRun { metric: ev.metric, s, trace })
}

/// Verdict of a full ε-schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuation {
    Converging,
    /// Final √−1ΛF residual stayed above the plateau thresholds: the sweep
    /// behaves like the unstable branch of the dichotomy.
    Obstructed,
}

#[derive(Debug)]
pub struct SweepReport {
    pub runs: Vec<SolveRun>,
    /// (ε, message) for schedule entries whose solve failed outright.
    pub errors: Vec<(f64, String)>,
    pub classification: Continuation,
}

/// Warm-started continuation over a strictly decreasing ε schedule.  A failed
/// solve is recorded and the next ε restarts cold from s = 0.
pub fn epsilon_sweep(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    schedule: &[f64],
    base: &SolverOptions,
) -> Result<SweepReport> {
    if schedule.is_empty() {
        return Err(Error::Config("empty ε schedule".into()));
    }
    for w in schedule.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Config(format!(
                "ε schedule must be strictly decreasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    let mut runs: Vec<SolveRun> = Vec::new();
    let mut errors = Vec::new();
    let mut warm: Option<EndoField> = None;
    for &eps in schedule {
        let opts = SolverOptions { epsilon: eps, ..base.clone() };
        match solve_perturbed_from(bundle, geo, k, &opts, warm.as_ref()) {
            Ok(run) => {
                warm = Some(run.s.clone());
                runs.push(run);
            }
            Err(e) => {
                errors.push((eps, e.to_string()));
                warm = None;
            }
        }
    }
    let classification = match (runs.first(), runs.last()) {
        (Some(first), Some(last)) => {
            let gate = PLATEAU_RESIDUAL_ABS.max(PLATEAU_RESIDUAL_REL * first.trace.phi_residual);
            if last.trace.phi_residual > gate {
                Continuation::Obstructed
            } else {
                Continuation::Converging
            }
        }
        _ => Continuation::Obstructed,
    };
    Ok(SweepReport { runs, errors, classification })
}

/// Sup bounds on s = log h against the background residual Φ(K).
#[derive(Debug, Clone, Copy)]
pub struct LogBoundReport {
    /// sup of ½√−1Λ∂̄∂|s|² + ε|s|² − |Φ(K)|_K·|s|_K (ought to be ≤ 0).
    pub pointwise_sup: f64,
    /// Positive part of the above beyond the FD budget.
    pub pointwise_defect: f64,
    /// (1/ε)·max|Φ(K)|_K − max|s|_K.
    pub bound2_slack: f64,
    /// C·(‖s‖_{L²} + max|Φ(K)|_K) − max|s|_K at the pinned envelope C.
    pub bound3_slack: f64,
    /// Smallest C that would make the previous bound tight here.
    pub required_c: f64,
    pub max_log_h: f64,
    pub phi_sup: f64,
    pub l2_log_h: f64,
}

/// Check the maximum-principle bounds on log h.
///
/// The pointwise differential inequality is evaluated with the spectral
/// Laplacian on |s|²_K; its budget is `fd_tol`·(1 + sup RHS) since both sides
/// carry the curvature pipeline's truncation error scaled by |s|.
pub fn check_log_h_bounds(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    s: &EndoField,
    epsilon: f64,
) -> Result<LogBoundReport> {
    let frame = build_frame(bundle, k)?;
    let (phi, _) = background_phi(bundle, geo, k, &frame.own)?;
    let r = s.r;
    let npts = s.npoints();
    let f: Vec<f64> = (0..npts)
        .map(|p| {
            let v = hs_g(r, frame.inv(r, p), frame.gram(k, p), s.at(p));
            v * v
        })
        .collect();
    let lap = geo.poisson_apply(&f);
    let mut pointwise_sup = f64::NEG_INFINITY;
    let mut rhs_sup = 0.0f64;
    let mut phi_sup = 0.0f64;
    for p in 0..npts {
        let pn = hs_g(r, frame.inv(r, p), frame.gram(k, p), phi.at(p));
        phi_sup = phi_sup.max(pn);
        let lhs = 0.5 * lap[p] + epsilon * f[p];
        let rhs = pn * f[p].sqrt();
        rhs_sup = rhs_sup.max(rhs);
        pointwise_sup = pointwise_sup.max(lhs - rhs);
    }
    let budget = fd_tol(geo.grid.max_spacing()) * (1.0 + rhs_sup);
    let m = f.iter().fold(0.0f64, |a, v| a.max(*v)).sqrt();
    let l2 = geo.integrate(&f).max(0.0).sqrt();
    let denom = l2 + phi_sup;
    Ok(LogBoundReport {
        pointwise_sup,
        pointwise_defect: (pointwise_sup - budget).max(0.0),
        bound2_slack: phi_sup / epsilon - m,
        bound3_slack: SUP_FROM_L1_CONSTANT * denom - m,
        required_c: if denom > 0.0 { m / denom } else { 0.0 },
        max_log_h: m,
        phi_sup,
        l2_log_h: l2,
    })
}

/// Integrated energy identity for a converged log-state.
#[derive(Debug, Clone, Copy)]
pub struct EnergyIdentityReport {
    /// ∫ tr(Φ(K)s) + ∫ ⟨Ψ(s)(∂̄s), ∂̄s⟩_K.
    pub lhs: f64,
    /// −ε‖s‖²_{L²}.
    pub rhs: f64,
    pub defect: f64,
    pub tol: f64,
    /// The quadratic Ψ-term alone (≥ 0 by kernel positivity).
    pub psi_term: f64,
    /// sup_p of |⟨Ψ(s)(∂̄s), ∂̄s⟩_K − tr √−1Λ_ω(h⁻¹∂_K h ∧ ∂̄s)|: the same
    /// density computed through the divided-difference kernel and through the
    /// Chern-connection increment must agree pointwise.
    pub pairing_defect: f64,
}

/// Check ∫tr(Φ(K)s) + ∫⟨Ψ(s)(∂̄s),∂̄s⟩_K = −ε‖s‖²_{L²} with
/// Ψ(x,y) = (e^{y−x}−1)/(y−x), plus the pointwise dual-route identity.
pub fn check_energy_identity(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    s: &EndoField,
    epsilon: f64,
    residual_tol: f64,
) -> Result<EnergyIdentityReport> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = s.r;
    let rr = r * r;
    let npts = grid.npoints();
    let frame = build_frame(bundle, k)?;
    let (phi, _) = background_phi(bundle, geo, k, &frame.own)?;
    let (conn_k, _) = chern_connection(bundle, k)?;
    let binv = geo.base_inverse();

    // Per chart: ∂̄s, the covariant ∂_K s = ∂s + [A_K, s], and the dual-route
    // density tr √−1Λ(h⁻¹∂_K h ∧ ∂̄s).
    let mut dbar = EndForm::zeros(npts, n, r, FormKind::ZeroOne);
    let mut dks = EndForm::zeros(npts, n, r, FormKind::OneZero);
    let mut dual = vec![C64::new(0.0, 0.0); npts];
    for c in 0..cover.charts.len() {
        let chart = &cover.charts[c];
        let view = chart_endo(bundle, s, c);
        let hbox: Result<Vec<C64>> = {
            let mut h = vec![C64::new(0.0, 0.0); chart.box_points() * rr];
            for b in 0..chart.box_points() {
                let e = point_fun(r, k.gram(c, b), &view[b * rr..(b + 1) * rr], f64::exp)?;
                h[b * rr..(b + 1) * rr].copy_from_slice(&e);
            }
            Ok(h)
        };
        let hbox = hbox?;
        let danti: Vec<Vec<C64>> =
            (0..n).map(|a| box_wirtinger(cover, c, rr, &view, a, true)).collect();
        let dholo: Vec<Vec<C64>> =
            (0..n).map(|a| box_wirtinger(cover, c, rr, &view, a, false)).collect();
        let dh: Vec<Vec<C64>> =
            (0..n).map(|a| box_wirtinger(cover, c, rr, &hbox, a, false)).collect();
        for p in 0..npts {
            if frame.own.owner[p] as usize != c {
                continue;
            }
            let b = frame.own.box_idx[p] as usize;
            let hinv = linalg::inverse(r, &hbox[b * rr..(b + 1) * rr])?;
            let conf = geo.conf(p);
            for alpha in 0..n {
                dbar.at_mut(p, alpha).copy_from_slice(&danti[alpha][b * rr..(b + 1) * rr]);
                let a_k = conn_k.at(c, b, alpha);
                let mut cov = dholo[alpha][b * rr..(b + 1) * rr].to_vec();
                let comm = linalg::commutator(r, a_k, &view[b * rr..(b + 1) * rr]);
                for (ti, ci) in cov.iter_mut().zip(&comm) {
                    *ti += ci;
                }
                dks.at_mut(p, alpha).copy_from_slice(&cov);
            }
            for alpha in 0..n {
                // X_α = h⁻¹(∂_α h + [A_α, h])
                let a_k = conn_k.at(c, b, alpha);
                let h = &hbox[b * rr..(b + 1) * rr];
                let mut t = dh[alpha][b * rr..(b + 1) * rr].to_vec();
                let comm = linalg::commutator(r, a_k, h);
                for (ti, ci) in t.iter_mut().zip(&comm) {
                    *ti += ci;
                }
                let x = linalg::mul(r, &hinv, &t);
                for beta in 0..n {
                    let prod = linalg::mul(r, &x, dbar.at(p, beta));
                    dual[p] += binv[beta * n + alpha] * linalg::trace(r, &prod) / conf;
                }
            }
        }
    }

    // Ψ acts on the (1,0) side: h⁻¹∂_K h = Ψ(s)(∂_K s), and the pairing
    // against ∂̄s = (∂_K s)^{*K} is the positive quadratic form of the
    // identity.  (Ψ is not symmetric in its arguments, so applying it to ∂̄s
    // instead would be off by a factor e^{λ_i−λ_j} per eigen-component.)
    let psi = psi_apply_form(&frame.own, k, s, &dks, &dexp_kernel())?;
    let mut pair = vec![0.0f64; npts];
    let mut pairing_defect = 0.0f64;
    for p in 0..npts {
        let conf = geo.conf(p);
        let mut v = C64::new(0.0, 0.0);
        for alpha in 0..n {
            for beta in 0..n {
                let prod = linalg::mul(r, psi.at(p, alpha), dbar.at(p, beta));
                v += binv[beta * n + alpha] * linalg::trace(r, &prod) / conf;
            }
        }
        pair[p] = v.re;
        pairing_defect = pairing_defect.max((v - dual[p]).norm());
    }

    let tphi: Vec<f64> =
        (0..npts).map(|p| linalg::trace(r, &linalg::mul(r, phi.at(p), s.at(p))).re).collect();
    let f: Vec<f64> = (0..npts)
        .map(|p| {
            let v = hs_g(r, frame.inv(r, p), frame.gram(k, p), s.at(p));
            v * v
        })
        .collect();
    let psi_term = geo.integrate(&pair);
    let lhs = geo.integrate(&tphi) + psi_term;
    let rhs = -epsilon * geo.integrate(&f);
    let tol = fd_tol(geo.grid.max_spacing()).max(10.0 * residual_tol * geo.volume());
    Ok(EnergyIdentityReport {
        lhs,
        rhs,
        defect: (lhs - rhs).abs(),
        tol,
        psi_term,
        pairing_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{
        build_compatible_metric, build_direct_sum, build_theta_bundle, build_trivial_bundle,
        build_clock_shift_bundle, MetricSeed,
    };
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn flat_geo(n: usize, pts: usize) -> TorusGeometry {
        TorusGeometry::flat(Grid::uniform(n, pts).unwrap())
    }

    /// Rank-1 trivial bundle with K = e^{a·cos(2πx)} on an N-point torus.
    fn conformal_line(npts: usize, a: f64) -> (TorusGeometry, TwistedBundle, MetricField) {
        let geo = flat_geo(1, npts);
        let bundle = build_trivial_bundle(&geo.grid, 1).unwrap();
        let cover = bundle.cover();
        let mut k = MetricField::identity(cover, 1);
        for c in 0..cover.charts.len() {
            let chart = &cover.charts[c];
            for b in 0..chart.box_points() {
                let coords = chart.torus_coords(&geo.grid.dims, b);
                let x = geo.grid.coord_value(0, coords[0]);
                k.gram_mut(c, b)[0] = C64::new((a * (TAU * x).cos()).exp(), 0.0);
            }
        }
        (geo, bundle, k)
    }

    #[test]
    fn flat_background_is_an_exact_fixed_point() {
        let geo = flat_geo(1, 16);
        let bundle = build_trivial_bundle(&geo.grid, 2).unwrap();
        let k = MetricField::identity(bundle.cover(), 2);
        let run = solve_perturbed(&bundle, &geo, &k, &SolverOptions::new(0.25)).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Converged);
        assert_eq!(run.trace.residuals.len(), 1, "no steps needed");
        assert!(run.trace.residuals[0] < 1e-12);
        assert_eq!(run.trace.max_log_h, 0.0);
        assert_eq!(run.trace.det_drift, 0.0);
        assert!(run.trace.phi_residual < 1e-12);
        let lb = run.trace.log_bounds.unwrap();
        assert!(lb.bound2_slack >= 0.0);
        assert!(lb.pointwise_defect == 0.0);
        let en = run.trace.energy.unwrap();
        assert!(en.defect < 1e-12 && en.psi_term.abs() < 1e-14);
    }

    #[test]
    fn clock_shift_flat_metric_is_a_twisted_fixed_point() {
        let geo = flat_geo(1, 16);
        let bundle = build_clock_shift_bundle(&geo.grid, 2).unwrap();
        let k = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let run = solve_perturbed(&bundle, &geo, &k, &SolverOptions::new(0.1)).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Converged);
        assert!(run.trace.residuals[0] < 1e-12, "flat twisted metric already solves");
        assert!(run.trace.max_log_h < 1e-12);
        assert!(run.trace.det_drift < 1e-12);
    }

    #[test]
    fn helmholtz_continuation_matches_spectral_solution() {
        // K = e^{ψ}, ψ = cos 2πx: the equation is the scalar Helmholtz problem
        // √−1Λ∂̄∂ s + εs = −√−1Λ∂̄∂ψ with Fourier solution ŝ = −q·ψ̂/(q+ε),
        // q = π².  The stencil symbol shifts the discrete solution by ≈ 6e−8.
        let (geo, bundle, k) = conformal_line(64, 1.0);
        let mut opts = SolverOptions::new(0.1);
        opts.residual_tol = 1e-9;
        let run = solve_perturbed(&bundle, &geo, &k, &opts).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Converged);
        assert!(
            run.trace.residuals.len() <= 12,
            "preconditioned flow should land fast, took {} accepted steps",
            run.trace.residuals.len() - 1
        );
        let q = PI * PI;
        let amp = -q / (q + 0.1);
        let mut sup = 0.0f64;
        for p in 0..geo.grid.npoints() {
            let x = geo.grid.coord_value(0, geo.grid.coords(p)[0]);
            let expect = amp * (TAU * x).cos();
            let got = run.s.at(p)[0];
            sup = sup.max((got - C64::new(expect, 0.0)).norm());
        }
        assert!(sup < 5e-7, "sup deviation from the Fourier oracle: {sup:.3e}");
        assert!(run.trace.sym_defect < 1e-12);
        // accepted residuals never increase
        for w in run.trace.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let lb = run.trace.log_bounds.unwrap();
        assert!(lb.bound2_slack > 0.0, "sup bound holds with real slack");
        assert!(lb.pointwise_defect == 0.0);
        let en = run.trace.energy.unwrap();
        assert!(en.defect <= en.tol, "energy identity defect {} > {}", en.defect, en.tol);
        assert!(en.psi_term >= 0.0);
        assert!(en.pairing_defect < fd_tol(1.0 / 64.0));
    }

    #[test]
    fn normalization_flattens_a_conformal_line_background() {
        let (geo, bundle, k) = conformal_line(64, 1.0);
        let kn = normalize_background(&bundle, &geo, &k).unwrap();
        let own = OwnerIndex::build(bundle.cover());
        let (phi, lambda) = background_phi(&bundle, &geo, &kn, &own).unwrap();
        assert!(lambda.abs() < 1e-10, "degree-zero line keeps λ = 0");
        let sup = (0..phi.npoints()).map(|p| phi.at(p)[0].norm()).fold(0.0, f64::max);
        assert!(sup < 1e-9, "trace-normalized background keeps Φ at {sup:.3e}");
        // determinant identity now holds at solver precision
        let mut opts = SolverOptions::new(0.1);
        opts.residual_tol = 1e-9;
        let run = solve_perturbed(&bundle, &geo, &kn, &opts).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Converged);
        assert!(run.trace.det_drift <= 1e-8, "det drift {:.3e}", run.trace.det_drift);
    }

    #[test]
    fn unstable_split_blows_up_at_rate_one_over_epsilon() {
        // theta(1)⊕theta(−1): Φ(K) = diag(π, −π) + O(h⁴) is constant, so one
        // preconditioned step lands on s = −Φ(K)/ε up to the stencil floor of
        // the curvature pipeline (≈1e−3 at this resolution), where the flow
        // then stalls with shrinking steps: the expected plateau.
        let geo = flat_geo(1, 32);
        let plus = build_theta_bundle(&geo.grid, &[1]).unwrap();
        let minus = build_theta_bundle(&geo.grid, &[-1]).unwrap();
        let bundle = build_direct_sum(&[&plus, &minus]).unwrap();
        let k = build_compatible_metric(&bundle, MetricSeed::Natural).unwrap();
        let eps = 0.1;
        let mut opts = SolverOptions::new(eps);
        opts.residual_tol = 1e-6;
        opts.max_iters = 200;
        let run = solve_perturbed(&bundle, &geo, &k, &opts).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Plateau);
        let stall = *run.trace.residuals.last().unwrap();
        assert!(stall < 5e-3, "stalls at the discretization floor, got {stall:.3e}");
        let expect_m = 2.0f64.sqrt() * PI / eps;
        assert!(
            (run.trace.max_log_h - expect_m).abs() < 0.02 * expect_m,
            "max|log h| = {} vs √2π/ε = {}",
            run.trace.max_log_h,
            expect_m
        );
        let expect_phi = 2.0f64.sqrt() * PI;
        assert!(
            (run.trace.phi_residual - expect_phi).abs() < 0.02 * expect_phi,
            "Φ-residual {} vs √2π",
            run.trace.phi_residual
        );
        // tr s ≈ 0: opposite factors cancel, det h stays near 1
        assert!(run.trace.det_drift < 1e-2, "det drift {:.3e}", run.trace.det_drift);
        let lb = run.trace.log_bounds.unwrap();
        assert!(lb.bound2_slack >= 0.0, "sup bound saturates from below: {}", lb.bound2_slack);
        assert!(lb.bound2_slack < 0.5, "near saturation");
        // the plateau state is the exact ε-solution up to seam noise, so the
        // energy identity still closes there
        let en = run.trace.energy.unwrap();
        assert!(en.defect <= en.tol, "energy defect {} > tol {}", en.defect, en.tol);
        assert!(en.psi_term >= 0.0);
    }

    #[test]
    fn semistable_sweep_residual_tracks_epsilon() {
        // theta(1)⊕theta(1) with the natural metric sheared by
        // exp(0.6·cos(2πx)·diag(1,−1)): each factor relaxes a scalar Helmholtz
        // problem, so the converged residual is ε·0.6·√2·q/(q+ε), q = π².
        let geo = flat_geo(1, 32);
        let one = build_theta_bundle(&geo.grid, &[1]).unwrap();
        let bundle = build_direct_sum(&[&one, &one]).unwrap();
        let nat = build_compatible_metric(&bundle, MetricSeed::Natural).unwrap();
        let npts = geo.grid.npoints();
        let mut shear = EndoField::zeros(npts, 2);
        for p in 0..npts {
            let x = geo.grid.coord_value(0, geo.grid.coords(p)[0]);
            let v = 0.6 * (TAU * x).cos();
            let m = shear.at_mut(p);
            m[0] = C64::new(v, 0.0);
            m[3] = C64::new(-v, 0.0);
        }
        let k = metric_exp(&bundle, &nat, &shear).unwrap();
        let schedule = [0.3, 0.1];
        let mut base = SolverOptions::new(schedule[0]);
        // chart-seam truncation can stall theta backgrounds a little below
        // 3e−6 at this resolution; 1e−5 keeps every solve genuinely convergent
        base.residual_tol = 1e-5;
        base.max_iters = 300;
        let sweep = epsilon_sweep(&bundle, &geo, &k, &schedule, &base).unwrap();
        assert_eq!(sweep.classification, Continuation::Converging);
        assert!(sweep.errors.is_empty());
        let q = PI * PI;
        for (run, &eps) in sweep.runs.iter().zip(&schedule) {
            assert_eq!(run.trace.outcome, Outcome::Converged);
            let expect = eps * 0.6 * 2.0f64.sqrt() * q / (q + eps);
            let got = run.trace.phi_residual;
            assert!(
                (got - expect).abs() < 0.05 * expect + 4e-3,
                "ε = {eps}: Φ-residual {got} vs {expect}"
            );
            let en = run.trace.energy.unwrap();
            assert!(en.defect <= en.tol, "ε = {eps}: energy defect {} > {}", en.defect, en.tol);
        }
        // warm start pays: the second solve opens at the previous solution,
        // not at the cold residual (≈8 for this background)
        assert!(
            sweep.runs[1].trace.residuals[0] < 1.0,
            "warm start should reuse the ε = 0.3 state"
        );
    }

    #[test]
    fn sweep_rejects_non_decreasing_schedules() {
        let geo = flat_geo(1, 16);
        let bundle = build_trivial_bundle(&geo.grid, 1).unwrap();
        let k = MetricField::identity(bundle.cover(), 1);
        let base = SolverOptions::new(0.3);
        match epsilon_sweep(&bundle, &geo, &k, &[0.3, 0.3], &base) {
            Err(Error::Config(msg)) => assert!(msg.contains("strictly decreasing")),
            other => panic!("expected config error, got {other:?}"),
        }
        match epsilon_sweep(&bundle, &geo, &k, &[], &base) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn noncommuting_shear_converges_with_monotone_residuals() {
        // A non-diagonal K-self-adjoint shear: the preconditioner is no longer
        // exact (background-connection commutators enter the linearization),
        // yet at these amplitudes the flow still contracts at full step.
        let geo = flat_geo(1, 32);
        let bundle = build_trivial_bundle(&geo.grid, 2).unwrap();
        let id = MetricField::identity(bundle.cover(), 2);
        let npts = geo.grid.npoints();
        let mut shear = EndoField::zeros(npts, 2);
        for p in 0..npts {
            let x = geo.grid.coord_value(0, geo.grid.coords(p)[0]);
            let y = geo.grid.coord_value(1, geo.grid.coords(p)[1]);
            let a = 0.15 * (TAU * x).cos();
            let b = C64::new(0.1 * (TAU * y).sin(), 0.1 * (TAU * x).sin());
            let m = shear.at_mut(p);
            m[0] = C64::new(a, 0.0);
            m[1] = b;
            m[2] = b.conj();
            m[3] = C64::new(-a, 0.0);
        }
        let k = metric_exp(&bundle, &id, &shear).unwrap();
        let mut opts = SolverOptions::new(0.1);
        opts.residual_tol = 1e-7;
        opts.max_iters = 800;
        let run = solve_perturbed(&bundle, &geo, &k, &opts).unwrap();
        assert_eq!(run.trace.outcome, Outcome::Converged);
        assert!(run.trace.residuals.len() > 2, "takes real steps");
        for w in run.trace.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "accepted residuals non-increasing");
        }
        assert!(run.trace.sym_defect < 1e-10, "stays on the K-self-adjoint slice");
        let en = run.trace.energy.unwrap();
        assert!(en.defect <= en.tol, "energy defect {} > tol {}", en.defect, en.tol);
        assert!(en.psi_term >= 0.0);
        assert!(en.pairing_defect < fd_tol(1.0 / 32.0) * 10.0);
    }


    #[test]
    fn options_validation_rejects_bad_epsilon() {
        let geo = flat_geo(1, 16);
        let bundle = build_trivial_bundle(&geo.grid, 1).unwrap();
        let k = MetricField::identity(bundle.cover(), 1);
        for bad in [0.0, -0.1, 1.5] {
            match solve_perturbed(&bundle, &geo, &k, &SolverOptions::new(bad)) {
                Err(Error::Config(_)) => {}
                other => panic!("ε = {bad}: expected config error, got {other:?}"),
            }
        }
    }
}
