//! Slope stability against declared subbundles, and the spectral probe that
//! extracts destabilizing structure from a blown-up continuation.
//!
//! Subbundles enter as K-orthogonal projector fields π (π² = π = π^{*K}); the
//! degree of the cut-out sheaf is the projection integral
//!
//!   deg(π) = (1/2π)·∫ tr(π·√−1Λ_ωF_K) − |∂̄π|²_K  ω^n/n!,
//!
//! and a candidate destabilizes when μ(π) = deg(π)/rank(π) exceeds μ(E).
//! `verdict_against` grades an explicit candidate list this way.
//!
//! `uy_probe` runs the converse direction on a continuation that failed to
//! converge: normalize the final log-state u = s/‖s‖_{L²}, cluster its
//! eigenvalue fields λ₁ < … < λ_l by gap thresholding, cut a smoothed spectral
//! projector π_j below each gap, and evaluate the obstruction number in two
//! independent forms,
//!
//!   ν = λ_l·deg(E) − Σ_j (λ_{j+1}−λ_j)·deg(π_j)
//!     = Σ_j (λ_{j+1}−λ_j)·rank(π_j)·(μ(E) − μ(π_j)),
//!
//! which agree exactly when u is trace-free with constant eigenvalues; their
//! mismatch is reported as a health figure.  ν significantly negative means
//! some π_j cuts out a destabilizing subbundle.

use num_complex::Complex64 as C64;

use crate::bundle::{
    box_wirtinger, chart_endo, chern_connection, curvature, lambda_f, point_eig, point_fun,
    EndoField, MetricField, OwnerIndex, TwistedBundle,
};
use crate::chern;
use crate::constants::{fd_tol, CLUSTER_GAP_FRACTION};
use crate::geometry::TorusGeometry;
use crate::linalg;
use crate::solver::SweepReport;
use crate::{Error, Result};

fn trace_prod(r: usize, a: &[C64], b: &[C64]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..r {
        for j in 0..r {
            s += a[i * r + j] * b[j * r + i];
        }
    }
    s
}

/// K-adjoint K⁻¹·X†·K.
fn adj_k(r: usize, kinv: &[C64], k: &[C64], x: &[C64]) -> Vec<C64> {
    linalg::mul3(r, kinv, &linalg::adjoint(r, x), k)
}

/// An explicit subbundle candidate: a projector field in owner gauge that is
/// K-orthogonal and of constant pointwise rank.
#[derive(Debug, Clone)]
pub struct SubbundleCandidate {
    pub projector: EndoField,
    pub label: String,
    pub declared_rank: usize,
}

/// Candidate for one block of a direct sum: the constant coordinate projector
/// onto the frame indices in `range`.
pub fn block_candidate(
    bundle: &TwistedBundle,
    range: std::ops::Range<usize>,
    label: &str,
) -> Result<SubbundleCandidate> {
    let r = bundle.rank;
    if range.start >= range.end || range.end > r {
        return Err(Error::Config(format!(
            "candidate '{label}': block {}..{} outside rank {r}",
            range.start, range.end
        )));
    }
    let npts = bundle.grid().npoints();
    let mut pi = EndoField::zeros(npts, r);
    for p in 0..npts {
        let m = pi.at_mut(p);
        for i in range.clone() {
            m[i * r + i] = C64::new(1.0, 0.0);
        }
    }
    Ok(SubbundleCandidate {
        projector: pi,
        label: label.to_string(),
        declared_rank: range.len(),
    })
}

/// Rank-1 candidate spanned by an explicit nowhere-zero section (owner gauge,
/// r entries per point): π = v·(v†G_K)/⟨v,v⟩_K, the K-orthogonal projector
/// onto the line through v.
pub fn line_candidate(
    bundle: &TwistedBundle,
    k: &MetricField,
    section: &[C64],
    label: &str,
) -> Result<SubbundleCandidate> {
    let r = bundle.rank;
    let npts = bundle.grid().npoints();
    if section.len() != npts * r {
        return Err(Error::ShapeMismatch(format!(
            "candidate '{label}': section has {} entries, expected {npts}·{r}",
            section.len()
        )));
    }
    let own = OwnerIndex::build(bundle.cover());
    let mut pi = EndoField::zeros(npts, r);
    for p in 0..npts {
        let g = k.gram(own.owner[p] as usize, own.box_idx[p] as usize);
        let v = &section[p * r..(p + 1) * r];
        let mut w = vec![C64::new(0.0, 0.0); r];
        for j in 0..r {
            for i in 0..r {
                w[j] += v[i].conj() * g[i * r + j];
            }
        }
        let nrm: C64 = (0..r).map(|i| w[i] * v[i]).sum();
        if !(nrm.re > 0.0) {
            return Err(Error::InvalidProjector(format!(
                "candidate '{label}': section vanishes at point {p}"
            )));
        }
        let m = pi.at_mut(p);
        for i in 0..r {
            for j in 0..r {
                m[i * r + j] = v[i] * w[j] / nrm.re;
            }
        }
    }
    Ok(SubbundleCandidate { projector: pi, label: label.to_string(), declared_rank: 1 })
}

fn projector_defect_with(own: &OwnerIndex, k: &MetricField, pi: &EndoField) -> Result<f64> {
    let r = pi.r;
    let mut idem_sup = 0.0f64;
    let mut sym_sup = 0.0f64;
    for p in 0..pi.npoints() {
        let g = k.gram(own.owner[p] as usize, own.box_idx[p] as usize);
        let ginv = linalg::inverse(r, g)?;
        let m = pi.at(p);
        let mut idem = linalg::mul(r, m, m);
        linalg::axpy(C64::new(-1.0, 0.0), m, &mut idem);
        let mut sym = adj_k(r, &ginv, g, m);
        linalg::axpy(C64::new(-1.0, 0.0), m, &mut sym);
        idem_sup = idem_sup.max(linalg::sup_entry(&idem));
        sym_sup = sym_sup.max(linalg::sup_entry(&sym));
    }
    Ok(idem_sup + sym_sup)
}

/// sup_p |π² − π| + sup_p |π − π^{*K}| in entry sup norm.
pub fn projector_defect(bundle: &TwistedBundle, k: &MetricField, pi: &EndoField) -> Result<f64> {
    projector_defect_with(&OwnerIndex::build(bundle.cover()), k, pi)
}

/// sup_p |(Id − π)·∂̄π|_K, (0,1) components contracted with the base metric —
/// the same norm whose square enters the projection degree.  Zero exactly when
/// π cuts out a holomorphic subbundle.
pub fn weak_holomorphy_defect(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    pi: &EndoField,
) -> Result<f64> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let rr = r * r;
    let own = OwnerIndex::build(cover);
    let binv = geo.base_inverse().to_vec();
    let mut sup = 0.0f64;
    for (c, chart) in cover.charts.iter().enumerate() {
        let view = chart_endo(bundle, pi, c);
        let danti: Vec<Vec<C64>> =
            (0..n).map(|al| box_wirtinger(cover, c, rr, &view, al, true)).collect();
        for b in 0..chart.box_points() {
            let coords = chart.torus_coords(&grid.dims, b);
            let p = grid.flat(&coords);
            if own.owner[p] as usize != c {
                continue;
            }
            let g = k.gram(c, b);
            let ginv = linalg::inverse(r, g)?;
            let pm = &view[b * rr..(b + 1) * rr];
            let comp: Vec<Vec<C64>> = (0..n)
                .map(|al| {
                    let mut d = danti[al][b * rr..(b + 1) * rr].to_vec();
                    let pd = linalg::mul(r, pm, &d);
                    linalg::axpy(C64::new(-1.0, 0.0), &pd, &mut d);
                    d
                })
                .collect();
            let conf = geo.conf(p);
            let mut nsq = 0.0;
            for al in 0..n {
                for be in 0..n {
                    let adj = adj_k(r, &ginv, g, &comp[be]);
                    nsq += (binv[be * n + al] * trace_prod(r, &comp[al], &adj)).re / conf;
                }
            }
            sup = sup.max(nsq.max(0.0).sqrt());
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone)]
pub struct CandidateReport {
    pub label: String,
    pub rank: usize,
    pub degree: f64,
    pub slope: f64,
    /// μ(E) − μ(candidate); below −tol the candidate destabilizes.
    pub margin: f64,
    pub projector_defect: f64,
    pub weak_holomorphy_defect: f64,
    /// Full-rank candidates are self-comparisons: reported, never graded.
    pub excluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListVerdict {
    StableAgainstList,
    SemistableAgainstList,
    Destabilized,
}

#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub bundle_degree: f64,
    pub bundle_slope: f64,
    pub candidates: Vec<CandidateReport>,
    pub verdict: ListVerdict,
}

/// Grade μ(E) against every candidate slope.  `Destabilized` when some margin
/// drops below −tol, `StableAgainstList` when every margin clears +tol (an
/// empty list is vacuously stable), `SemistableAgainstList` in between.
pub fn verdict_against(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    candidates: &[SubbundleCandidate],
    tol: f64,
) -> Result<StabilityVerdict> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::Config(format!("margin tolerance {tol} must be ≥ 0")));
    }
    let grid = bundle.grid();
    let r = bundle.rank;
    let own = OwnerIndex::build(bundle.cover());
    let (conn, _) = chern_connection(bundle, k)?;
    let (curv, _) = curvature(bundle, &conn)?;
    let (lam, _) = lambda_f(bundle, geo, k, &curv, &own)?;
    let c1 = chern::c1_form(bundle, &curv, &own);
    let bundle_degree = chern::degree(geo, &c1);
    let bundle_slope = bundle_degree / r as f64;
    let gate = fd_tol(grid.max_spacing());
    let mut reports = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if cand.declared_rank == 0 || cand.declared_rank > r {
            return Err(Error::InvalidProjector(format!(
                "candidate '{}': declared rank {} outside 1..={r}",
                cand.label, cand.declared_rank
            )));
        }
        let defect = projector_defect_with(&own, k, &cand.projector)?;
        if defect > gate {
            return Err(Error::InvalidProjector(format!(
                "candidate '{}': not K-orthogonal idempotent (defect {defect:.3e} > {gate:.3e})",
                cand.label
            )));
        }
        let mut tr_dev = 0.0f64;
        for p in 0..grid.npoints() {
            let t = linalg::trace(r, cand.projector.at(p));
            tr_dev = tr_dev.max((t.re - cand.declared_rank as f64).abs()).max(t.im.abs());
        }
        if tr_dev > 0.1 {
            return Err(Error::InvalidProjector(format!(
                "candidate '{}': pointwise rank strays from {} (sup deviation {tr_dev:.3e})",
                cand.label, cand.declared_rank
            )));
        }
        let degree = chern::degree_via_projection(bundle, geo, k, &lam, &cand.projector)?;
        let slope = degree / cand.declared_rank as f64;
        reports.push(CandidateReport {
            label: cand.label.clone(),
            rank: cand.declared_rank,
            degree,
            slope,
            margin: bundle_slope - slope,
            projector_defect: defect,
            weak_holomorphy_defect: weak_holomorphy_defect(bundle, geo, k, &cand.projector)?,
            excluded: cand.declared_rank == r,
        });
    }
    let graded: Vec<f64> = reports.iter().filter(|c| !c.excluded).map(|c| c.margin).collect();
    let verdict = if graded.iter().any(|&m| m < -tol) {
        ListVerdict::Destabilized
    } else if graded.iter().all(|&m| m > tol) {
        ListVerdict::StableAgainstList
    } else {
        ListVerdict::SemistableAgainstList
    };
    Ok(StabilityVerdict { bundle_degree, bundle_slope, candidates: reports, verdict })
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    /// Adjacent eigenvalue branches whose means gap by more than this fraction
    /// of the full spectral range start a new cluster.
    pub gap_fraction: f64,
    /// ‖log h‖_{L²} below this reads as "no blow-up": probe inconclusive.
    pub blowup_threshold: f64,
    /// ν < −nu_tol flags a destabilizing structure.
    pub nu_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> ProbeOptions {
        ProbeOptions {
            gap_fraction: CLUSTER_GAP_FRACTION,
            // bounded continuation states are O(1); blow-up scales like π/ε
            blowup_threshold: 5.0,
            nu_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterReport {
    /// Volume-weighted mean of the pooled eigenvalue samples of u.
    pub mean: f64,
    /// Their standard deviation: the "constant almost everywhere" defect.
    pub spread: f64,
    /// Number of eigenvalue branches pooled into this level.
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct ProbeFactor {
    pub projector: EndoField,
    pub rank: usize,
    /// |∫tr π dvol / Vol − rank|.
    pub rank_defect: f64,
    pub degree: f64,
    pub slope: f64,
    /// μ(E) − μ(factor).
    pub margin: f64,
    pub projector_defect: f64,
    pub weak_holomorphy_defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    DestabilizerFound,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub outcome: ProbeOutcome,
    pub note: String,
    /// ‖log h‖_{L²} of the probed state.
    pub l2_norm: f64,
    pub bundle_degree: f64,
    pub bundle_slope: f64,
    pub clusters: Vec<ClusterReport>,
    /// One factor per spectral gap, lowest cut first.
    pub factors: Vec<ProbeFactor>,
    /// Obstruction number from the top-eigenvalue form.
    pub nu: f64,
    /// The same number from the weighted-margin form; the difference measures
    /// how far u is from trace-free with constant eigenvalues.
    pub nu_weighted: f64,
}

/// 1 below a, 0 above b, cubic smoothstep across [a, b].
fn step_down(a: f64, b: f64, x: f64) -> f64 {
    let t = ((x - a) / (b - a)).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

/// Probe the endpoint of a continuation sweep for destabilizing structure
/// (the numerical face of the Uhlenbeck–Yau argument).  Delegates to
/// [`probe_state`] on the final log-state.
pub fn uy_probe(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    sweep: &SweepReport,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    let run = sweep
        .runs
        .last()
        .ok_or_else(|| Error::Config("probe needs at least one finished ε-solve".into()))?;
    probe_state(bundle, geo, k, &run.s, opts)
}

/// Probe one K-self-adjoint log-state: normalize, cluster the eigenvalue
/// fields, cut smoothed spectral projectors below each gap and grade their
/// slopes.  Structural failures (no blow-up, no spectral gap) come back as
/// `Inconclusive` reports, not errors.
pub fn probe_state(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    k: &MetricField,
    s: &EndoField,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if !(opts.gap_fraction > 0.0 && opts.gap_fraction < 1.0) {
        return Err(Error::Config(format!("gap fraction {} outside (0,1)", opts.gap_fraction)));
    }
    let grid = bundle.grid();
    let r = bundle.rank;
    let npts = grid.npoints();
    if s.npoints() != npts || s.r != r {
        return Err(Error::ShapeMismatch("probe state vs bundle".into()));
    }
    let own = OwnerIndex::build(bundle.cover());
    let (conn, _) = chern_connection(bundle, k)?;
    let (curv, _) = curvature(bundle, &conn)?;
    let (lam, _) = lambda_f(bundle, geo, k, &curv, &own)?;
    let c1 = chern::c1_form(bundle, &curv, &own);
    let bundle_degree = chern::degree(geo, &c1);
    let bundle_slope = bundle_degree / r as f64;
    let vol = geo.volume();

    // ‖s‖_{L²} together with the eigenvalue branches of s, ascending per point.
    let mut branch = vec![vec![0.0f64; npts]; r];
    let mut density = vec![0.0f64; npts];
    for p in 0..npts {
        let g = k.gram(own.owner[p] as usize, own.box_idx[p] as usize);
        let (vals, _, _) = point_eig(r, g, s.at(p))?;
        density[p] = vals.iter().map(|v| v * v).sum();
        for (i, &v) in vals.iter().enumerate() {
            branch[i][p] = v;
        }
    }
    let l2 = geo.integrate(&density).max(0.0).sqrt();

    let inconclusive = |note: String, clusters: Vec<ClusterReport>| ProbeReport {
        outcome: ProbeOutcome::Inconclusive,
        note,
        l2_norm: l2,
        bundle_degree,
        bundle_slope,
        clusters,
        factors: Vec::new(),
        nu: 0.0,
        nu_weighted: 0.0,
    };

    if l2 < opts.blowup_threshold {
        return Ok(inconclusive(
            format!(
                "no blow-up: ‖log h‖_L² = {l2:.3e} below threshold {:.3e}",
                opts.blowup_threshold
            ),
            Vec::new(),
        ));
    }

    // Branches of u = s/‖s‖ and their volume-weighted means.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in branch.iter_mut() {
        for v in b.iter_mut() {
            *v /= l2;
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let means: Vec<f64> = branch.iter().map(|b| geo.integrate(b) / vol).collect();
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(inconclusive("constant spectrum: nothing to cut".into(), Vec::new()));
    }
    let threshold = opts.gap_fraction * range;

    let mut bounds = vec![0usize];
    for i in 1..r {
        if means[i] - means[i - 1] > threshold {
            bounds.push(i);
        }
    }
    bounds.push(r);
    let l = bounds.len() - 1;

    let mut clusters = Vec::with_capacity(l);
    for j in 0..l {
        let members = bounds[j]..bounds[j + 1];
        let mult = members.len();
        let mean = members.clone().map(|i| means[i]).sum::<f64>() / mult as f64;
        let mut var = vec![0.0f64; npts];
        for i in members {
            for p in 0..npts {
                var[p] += (branch[i][p] - mean).powi(2);
            }
        }
        let spread = (geo.integrate(&var) / (mult as f64 * vol)).max(0.0).sqrt();
        clusters.push(ClusterReport { mean, spread, multiplicity: mult });
    }

    if l < 2 {
        return Ok(inconclusive(
            format!(
                "no spectral gap above {:.2}·range in the normalized log-state",
                opts.gap_fraction
            ),
            clusters,
        ));
    }

    let mut u = EndoField::zeros(npts, r);
    for (dst, src) in u.data.iter_mut().zip(s.data.iter()) {
        *dst = src / l2;
    }

    let mut factors = Vec::with_capacity(l - 1);
    let mut nu = clusters[l - 1].mean * bundle_degree;
    let mut nu_weighted = 0.0;
    for j in 0..l - 1 {
        let gap = clusters[j + 1].mean - clusters[j].mean;
        let mid = 0.5 * (clusters[j].mean + clusters[j + 1].mean);
        // smoothed step over the middle half of the gap
        let (a, b) = (mid - 0.25 * gap, mid + 0.25 * gap);
        let mut pi = EndoField::zeros(npts, r);
        for p in 0..npts {
            let g = k.gram(own.owner[p] as usize, own.box_idx[p] as usize);
            let m = point_fun(r, g, u.at(p), |x| step_down(a, b, x))?;
            pi.at_mut(p).copy_from_slice(&m);
        }
        let defect = projector_defect_with(&own, k, &pi)?;
        let tr: Vec<f64> = (0..npts).map(|p| linalg::trace(r, pi.at(p)).re).collect();
        let rank_raw = geo.integrate(&tr) / vol;
        let rank = rank_raw.round() as usize;
        if rank == 0 {
            return Ok(inconclusive(
                format!("cut below gap {j} has measure-zero rank ({rank_raw:.3e})"),
                clusters,
            ));
        }
        // a cut whose smearing fails the projector gate is a structural
        // failure of the probe, not a caller error
        let degree = match chern::degree_via_projection(bundle, geo, k, &lam, &pi) {
            Ok(d) => d,
            Err(Error::InvalidProjector(msg)) => {
                return Ok(inconclusive(format!("cut below gap {j}: {msg}"), clusters))
            }
            Err(e) => return Err(e),
        };
        let slope = degree / rank as f64;
        let margin = bundle_slope - slope;
        nu -= gap * degree;
        nu_weighted += gap * rank as f64 * margin;
        let weak = weak_holomorphy_defect(bundle, geo, k, &pi)?;
        factors.push(ProbeFactor {
            projector: pi,
            rank,
            rank_defect: (rank_raw - rank as f64).abs(),
            degree,
            slope,
            margin,
            projector_defect: defect,
            weak_holomorphy_defect: weak,
        });
    }

    let found = nu < -opts.nu_tol;
    let note = if found {
        format!("destabilizing structure found: ν = {nu:.4} < −{:.2}", opts.nu_tol)
    } else {
        format!("ν = {nu:.4} not significantly negative")
    };
    Ok(ProbeReport {
        outcome: if found { ProbeOutcome::DestabilizerFound } else { ProbeOutcome::Inconclusive },
        note,
        l2_norm: l2,
        bundle_degree,
        bundle_slope,
        clusters,
        factors,
        nu,
        nu_weighted,
    })
}

/// sup over the grid of the principal angle asin ‖π − ρ‖_op between two
/// projector fields, operator norm in the K inner product.
pub fn projector_angle(
    bundle: &TwistedBundle,
    k: &MetricField,
    a: &EndoField,
    b: &EndoField,
) -> Result<f64> {
    if a.npoints() != b.npoints() || a.r != b.r {
        return Err(Error::ShapeMismatch("projector fields".into()));
    }
    let own = OwnerIndex::build(bundle.cover());
    let r = a.r;
    let mut sup = 0.0f64;
    for p in 0..a.npoints() {
        let g = k.gram(own.owner[p] as usize, own.box_idx[p] as usize);
        let mut d = a.at(p).to_vec();
        linalg::axpy(C64::new(-1.0, 0.0), b.at(p), &mut d);
        let (vals, _, _) = point_eig(r, g, &d)?;
        sup = vals.iter().fold(sup, |m, v| m.max(v.abs()));
    }
    Ok(sup.min(1.0).asin())
}
