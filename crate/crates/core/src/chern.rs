//! Chern–Weil densities and numbers: c₁, c₂, degree, slope, projection
//! degrees, and the rank-normalized discriminant integral with its
//! norm-decomposition identity.
//!
//! All densities come from the raw curvature storage C (the Ω-matrix of
//! √−1F).  Wedge algebra on n = 2 reduces to the mixed permanent
//! perm2(M, N) = M₁₁N₂₂ + M₂₂N₁₁ − M₁₂N₂₁ − M₂₁N₁₂, through
//!   (√−1ΣM dz∧dz̄) ∧ (√−1ΣN dz∧dz̄) = +4·perm2(M, N)·dx⁴
//! and its End-valued version with ordered products.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::bundle::{
    chart_endo, chern_connection, curvature, lambda_f, ChartMatrixField, EndoField, MetricField,
    OwnerIndex, TwistedBundle,
};
use crate::constants::fd_tol;
use crate::geometry::{Form11Field, TorusGeometry};
use crate::linalg;
use crate::{Error, Result};

/// tr(A·B) without forming the product.
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

/// Hilbert–Schmidt norm² in the K inner product.
fn hs_norm_sq(r: usize, kinv: &[C64], k: &[C64], x: &[C64]) -> f64 {
    trace_prod(r, &adj_k(r, kinv, k, x), x).re
}

fn perm2(m: &[C64], w: &[C64]) -> C64 {
    m[0] * w[3] + m[3] * w[0] - m[1] * w[2] - m[2] * w[1]
}

/// Ω-storage matrix field of c₁(E,H) = (√−1/2π)·tr F_H, sampled in the
/// owner chart (the trace is gauge-invariant).
pub fn c1_form(bundle: &TwistedBundle, curv: &ChartMatrixField, own: &OwnerIndex) -> Form11Field {
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let mut out = Form11Field::zeros(n, grid.npoints());
    for p in 0..grid.npoints() {
        let (c, b) = (own.owner[p] as usize, own.box_idx[p] as usize);
        let m = out.at_mut(p);
        for comp in 0..n * n {
            m[comp] = linalg::trace(r, curv.at(c, b, comp)) / (2.0 * PI);
        }
    }
    out
}

/// deg_ω(E) = ∫ c₁ ∧ ω^{n−1}/(n−1)! = ∫ Λ_ω c₁ dvol (the two agree for
/// n ∈ {1, 2} under the pinned volume conventions).
pub fn degree(geo: &TorusGeometry, c1: &Form11Field) -> f64 {
    let lam = geo.contract_lambda(c1);
    let re: Vec<f64> = lam.iter().map(|v| v.re).collect();
    geo.integrate(&re)
}

pub fn slope(geo: &TorusGeometry, c1: &Form11Field, rank: usize) -> f64 {
    degree(geo, c1) / rank as f64
}

/// ∫ a ∧ b for two Ω-storage (1,1)-forms on n = 2 (coordinate measure).
pub fn wedge_integral(
    geo: &TorusGeometry,
    a: &Form11Field,
    b: &Form11Field,
) -> Result<f64> {
    let grid = &geo.grid;
    if grid.n != 2 {
        return Err(Error::UnsupportedDimension(grid.n));
    }
    let mut acc = 0.0;
    for p in 0..grid.npoints() {
        acc += 4.0 * perm2(a.at(p), b.at(p)).re;
    }
    Ok(acc * grid.cell_volume())
}

/// Scalar density of c₂(E,H) = −(1/8π²)[(tr F)² − tr(F∧F)], normalized so
/// that `geo.integrate` returns the c₂ number.  n = 2 only.
pub fn c2_density(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    curv: &ChartMatrixField,
    own: &OwnerIndex,
) -> Result<Vec<f64>> {
    let grid = bundle.grid();
    if grid.n != 2 {
        return Err(Error::UnsupportedDimension(grid.n));
    }
    let r = bundle.rank;
    let mut out = vec![0.0; grid.npoints()];
    for (p, slot) in out.iter_mut().enumerate() {
        let (c, b) = (own.owner[p] as usize, own.box_idx[p] as usize);
        let at = |comp: usize| curv.at(c, b, comp);
        let tmat: Vec<C64> = (0..4).map(|comp| linalg::trace(r, at(comp))).collect();
        let t2 = perm2(&tmat, &tmat);
        let e2 = trace_prod(r, at(0), at(3)) + trace_prod(r, at(3), at(0))
            - trace_prod(r, at(1), at(2))
            - trace_prod(r, at(2), at(1));
        *slot = ((t2 - e2) / (2.0 * PI * PI)).re / geo.vol_density(p);
    }
    Ok(out)
}

/// ∫ (2c₂ − (r−1)/r·c₁∧c₁) over an n = 2 torus (Astheno weight ω̃⁰ = 1).
pub fn bogomolov_number(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    curv: &ChartMatrixField,
    own: &OwnerIndex,
) -> Result<f64> {
    let c2 = c2_density(bundle, geo, curv, own)?;
    let c1 = c1_form(bundle, curv, own);
    let r = bundle.rank as f64;
    Ok(2.0 * geo.integrate(&c2) - (r - 1.0) / r * wedge_integral(geo, &c1, &c1)?)
}

/// Both sides of the traceless-curvature identity
/// ∫ tr(F⊥∧F⊥) = ∫ (|F⊥|² − |√−1Λ_ω F⊥|²) dvol,
/// trace route on the left, K-norm route on the right.  The integrand
/// identity is pointwise linear algebra, so the two agree to rounding;
/// 4π²·bogomolov_number equals either side.
pub fn bogomolov_decomposition(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    metric: &MetricField,
    curv: &ChartMatrixField,
    own: &OwnerIndex,
) -> Result<(f64, f64)> {
    let grid = bundle.grid();
    if grid.n != 2 {
        return Err(Error::UnsupportedDimension(grid.n));
    }
    let n = 2usize;
    let r = bundle.rank;
    let rr = r * r;
    let binv = geo.base_inverse().to_vec();
    let mut lhs = 0.0;
    let mut rhs = vec![0.0; grid.npoints()];
    for p in 0..grid.npoints() {
        let (c, b) = (own.owner[p] as usize, own.box_idx[p] as usize);
        // traceless part per form component
        let mut cperp = vec![C64::new(0.0, 0.0); n * n * rr];
        for comp in 0..n * n {
            let src = curv.at(c, b, comp);
            let dst = &mut cperp[comp * rr..(comp + 1) * rr];
            dst.copy_from_slice(src);
            let t = linalg::trace(r, src) / r as f64;
            for i in 0..r {
                dst[i * r + i] -= t;
            }
        }
        let at = |comp: usize| &cperp[comp * rr..(comp + 1) * rr];
        let e2 = trace_prod(r, at(0), at(3)) + trace_prod(r, at(3), at(0))
            - trace_prod(r, at(1), at(2))
            - trace_prod(r, at(2), at(1));
        lhs += -4.0 * e2.re;

        let conf = geo.conf(p);
        let k = metric.gram(c, b);
        let kinv = linalg::inverse(r, k)?;
        // X = √−1Λ_ω F⊥
        let mut x = vec![C64::new(0.0, 0.0); rr];
        for be in 0..n {
            for al in 0..n {
                let w = binv[be * n + al] / conf;
                linalg::axpy(w, at(al * n + be), &mut x);
            }
        }
        let mut form_norm = 0.0;
        for al in 0..n {
            for be in 0..n {
                for ga in 0..n {
                    for de in 0..n {
                        let w = binv[be * n + ga] * binv[de * n + al] / (conf * conf);
                        let adj = adj_k(r, &kinv, k, at(de * n + ga));
                        form_norm += (w * trace_prod(r, at(al * n + be), &adj)).re;
                    }
                }
            }
        }
        rhs[p] = form_norm - hs_norm_sq(r, &kinv, k, &x);
    }
    Ok((lhs * grid.cell_volume(), geo.integrate(&rhs)))
}

/// (1/2π)·∫ (tr(π·√−1Λ_ωF_K) − |∂̄π|²_K) dvol for a K-orthogonal projector
/// field π.  For π the projector onto a holomorphic subbundle this is the
/// subbundle degree; in general it is the projection functional entering
/// the stability probe.
pub fn degree_via_projection(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    metric: &MetricField,
    lam: &EndoField,
    pi: &EndoField,
) -> Result<f64> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let rr = r * r;
    let own = OwnerIndex::build(cover);
    let tol = fd_tol(grid.max_spacing());
    // projector gate: π² = π = π^{*K}
    let mut defect = 0.0f64;
    for p in 0..grid.npoints() {
        let (c, b) = (own.owner[p] as usize, own.box_idx[p] as usize);
        let pm = pi.at(p);
        let k = metric.gram(c, b);
        let kinv = linalg::inverse(r, k)?;
        let mut idem = linalg::mul(r, pm, pm);
        linalg::axpy(C64::new(-1.0, 0.0), pm, &mut idem);
        let mut sym = adj_k(r, &kinv, k, pm);
        linalg::axpy(C64::new(-1.0, 0.0), pm, &mut sym);
        defect = defect.max(linalg::sup_entry(&idem)).max(linalg::sup_entry(&sym));
    }
    if defect > tol {
        return Err(Error::InvalidProjector(format!(
            "projection input is not a K-orthogonal projector (defect {defect:.3e} > {tol:.3e})"
        )));
    }
    let binv = geo.base_inverse().to_vec();
    let mut integrand = vec![0.0; grid.npoints()];
    for (c, chart) in cover.charts.iter().enumerate() {
        let view = chart_endo(bundle, pi, c);
        let danti: Vec<Vec<C64>> = (0..n)
            .map(|al| crate::bundle::box_wirtinger(cover, c, rr, &view, al, true))
            .collect();
        for b in 0..chart.box_points() {
            let coords = chart.torus_coords(&grid.dims, b);
            let p = grid.flat(&coords);
            if own.owner[p] as usize != c {
                continue;
            }
            let conf = geo.conf(p);
            let k = metric.gram(c, b);
            let kinv = linalg::inverse(r, k)?;
            let tr_term = trace_prod(r, pi.at(p), lam.at(p)).re;
            let mut norm = 0.0;
            for al in 0..n {
                for be in 0..n {
                    let s_a = &danti[al][b * rr..(b + 1) * rr];
                    let s_b = &danti[be][b * rr..(b + 1) * rr];
                    let adj = adj_k(r, &kinv, k, s_b);
                    norm += (binv[be * n + al] * trace_prod(r, s_a, &adj)).re / conf;
                }
            }
            integrand[p] = tr_term - norm;
        }
    }
    Ok(geo.integrate(&integrand) / (2.0 * PI))
}

/// Both sides of the conformal residual bound
/// sup|√−1Λ_ω̃F⊥|_H ≤ e^{sup φ}·sup|√−1Λ_ωF − λ·Id|_H,
/// with ω̃ the unrescaled base form, λ = 2π·deg/(r·Vol), HS norms in H.
pub fn conformal_residual_bound_check(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    metric: &MetricField,
) -> Result<(f64, f64)> {
    let grid = bundle.grid();
    let r = bundle.rank;
    let own = OwnerIndex::build(bundle.cover());
    let (conn, _) = chern_connection(bundle, metric)?;
    let (curv, _) = curvature(bundle, &conn)?;
    let (lam, _) = lambda_f(bundle, geo, metric, &curv, &own)?;
    let c1 = c1_form(bundle, &curv, &own);
    let lam0 = 2.0 * PI * degree(geo, &c1) / (r as f64 * geo.volume());
    let mut lhs = 0.0f64;
    let mut rhs = 0.0f64;
    let mut max_conf = 0.0f64;
    for p in 0..grid.npoints() {
        let (c, b) = (own.owner[p] as usize, own.box_idx[p] as usize);
        let k = metric.gram(c, b);
        let kinv = linalg::inverse(r, k)?;
        let x = lam.at(p);
        let t = linalg::trace(r, x) / r as f64;
        let mut perp = x.to_vec();
        let mut shifted = x.to_vec();
        for i in 0..r {
            perp[i * r + i] -= t;
            shifted[i * r + i] -= lam0;
        }
        let conf = geo.conf(p);
        max_conf = max_conf.max(conf);
        lhs = lhs.max(conf * hs_norm_sq(r, &kinv, k, &perp).max(0.0).sqrt());
        rhs = rhs.max(hs_norm_sq(r, &kinv, k, &shifted).max(0.0).sqrt());
    }
    Ok((lhs, max_conf * rhs))
}

#[derive(Debug, Clone)]
pub struct CharacteristicReport {
    pub c1: Form11Field,
    /// integrate()-normalized c₂ density, n = 2 only.
    pub c2_density: Option<Vec<f64>>,
    pub degree: f64,
    pub slope: f64,
    pub bogomolov_number: Option<f64>,
    pub metric_id: String,
}

/// Full Chern–Weil summary of a metric: connection, curvature, densities,
/// numbers.
pub fn characteristic_report(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    metric: &MetricField,
    metric_id: &str,
) -> Result<CharacteristicReport> {
    let own = OwnerIndex::build(bundle.cover());
    let (conn, _) = chern_connection(bundle, metric)?;
    let (curv, _) = curvature(bundle, &conn)?;
    let c1 = c1_form(bundle, &curv, &own);
    let deg = degree(geo, &c1);
    if !deg.is_finite() {
        return Err(Error::NonFinite("degree integral".into()));
    }
    let (c2, bogo) = if bundle.grid().n == 2 {
        (
            Some(c2_density(bundle, geo, &curv, &own)?),
            Some(bogomolov_number(bundle, geo, &curv, &own)?),
        )
    } else {
        (None, None)
    };
    Ok(CharacteristicReport {
        c1,
        c2_density: c2,
        degree: deg,
        slope: deg / bundle.rank as f64,
        bogomolov_number: bogo,
        metric_id: metric_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{
        attach_twist, build_compatible_metric, build_direct_sum, build_theta_bundle,
        build_trivial_bundle, MetricSeed,
    };
    use crate::grid::Grid;
    use crate::twist::build_global_b;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn stack(
        bundle: &TwistedBundle,
        metric: &MetricField,
    ) -> (ChartMatrixField, OwnerIndex) {
        let (conn, _) = chern_connection(bundle, metric).unwrap();
        let (curv, _) = curvature(bundle, &conn).unwrap();
        (curv, OwnerIndex::build(bundle.cover()))
    }

    #[test]
    fn flat_trivial_characteristics_vanish() {
        let g = Grid::uniform(1, 16).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let bundle = build_trivial_bundle(&g, 2).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let rep = characteristic_report(&bundle, &geo, &metric, "flat").unwrap();
        assert!(rep.degree.abs() < 1e-12);
        assert!(rep.slope.abs() < 1e-12);
        assert!(rep.c2_density.is_none());
        let (curv, own) = stack(&bundle, &metric);
        assert!(matches!(
            c2_density(&bundle, &geo, &curv, &own),
            Err(Error::UnsupportedDimension(1))
        ));
    }

    #[test]
    fn theta_degree_calibrates_to_winding() {
        for (nn, d, tol) in [(32usize, 1i64, 1e-3), (32, 2, 2e-2), (16, 1, 3.9e-2)] {
            let g = Grid::uniform(1, nn).unwrap();
            let geo = TorusGeometry::flat(g.clone());
            let bundle = build_theta_bundle(&g, &[d]).unwrap();
            let metric = build_compatible_metric(&bundle, MetricSeed::Natural).unwrap();
            let (curv, own) = stack(&bundle, &metric);
            let c1 = c1_form(&bundle, &curv, &own);
            let deg = degree(&geo, &c1);
            assert!(
                (deg - d as f64).abs() < tol,
                "N={nn} d={d}: degree {deg:.6}"
            );
            assert_eq!(slope(&geo, &c1, 1), deg);
        }
    }

    #[test]
    fn degree_is_additive_on_direct_sums() {
        let g = Grid::uniform(1, 32).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let plus = build_theta_bundle(&g, &[1]).unwrap();
        let minus = build_theta_bundle(&g, &[-1]).unwrap();
        let sum = build_direct_sum(&[&plus, &minus]).unwrap();
        let metric = build_compatible_metric(&sum, MetricSeed::Natural).unwrap();
        let rep = characteristic_report(&sum, &geo, &metric, "sum").unwrap();
        assert!(rep.degree.abs() < 1e-3, "degree {:.6}", rep.degree);
        assert!(rep.slope.abs() < 1e-3);
    }

    #[test]
    fn degree_is_metric_independent_at_tolerance() {
        let g = Grid::uniform(1, 32).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let bundle = build_theta_bundle(&g, &[1]).unwrap();
        let base = build_compatible_metric(&bundle, MetricSeed::Natural).unwrap();
        let mut scaled = base.clone();
        let cover = bundle.cover();
        for (c, chart) in cover.charts.iter().enumerate() {
            for b in 0..chart.box_points() {
                let x = g.coord_value(0, chart.torus_coords(&g.dims, b)[0]);
                let s = C64::new((0.4 * (TAU * x).cos()).exp(), 0.0);
                for v in scaled.gram_mut(c, b) {
                    *v *= s;
                }
            }
        }
        let (curv_a, own) = stack(&bundle, &base);
        let (curv_b, _) = stack(&bundle, &scaled);
        let da = degree(&geo, &c1_form(&bundle, &curv_a, &own));
        let db = degree(&geo, &c1_form(&bundle, &curv_b, &own));
        assert!((da - 1.0).abs() < 1e-3);
        assert!((da - db).abs() < fd_tol(g.max_spacing()), "Δdeg {:.3e}", da - db);
    }

    #[test]
    fn twisted_degree_shifts_by_b_trace() {
        let g = Grid::uniform(1, 16).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let plain = build_trivial_bundle(&g, 1).unwrap();
        let c = 0.7;
        let mut form = geo.omega();
        for v in form.data.iter_mut() {
            *v *= c;
        }
        let twist = build_global_b(plain.cover(), &form).unwrap();
        let bundle = attach_twist(&plain, twist).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let (curv, own) = stack(&bundle, &metric);
        let deg = degree(&geo, &c1_form(&bundle, &curv, &own));
        // deg = −c·n·Vol/2π exactly for a constant B-field
        let want = -c * geo.volume() / (2.0 * PI);
        assert!((deg - want).abs() < 1e-12, "degree {deg:.6} want {want:.6}");
    }

    #[test]
    fn untwisted_conformal_metric_has_zero_degree() {
        // c1 of e^{−u}·H₀ is ∂̄∂-exact; the discrete integral telescopes
        let g = Grid::uniform(1, 32).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let bundle = build_trivial_bundle(&g, 1).unwrap();
        let cover = bundle.cover().clone();
        let mut metric = MetricField::identity(&cover, 1);
        for (c, chart) in cover.charts.iter().enumerate() {
            for b in 0..chart.box_points() {
                let x = g.coord_value(0, chart.torus_coords(&g.dims, b)[0]);
                metric.gram_mut(c, b)[0] = C64::new((-0.3 * (TAU * x).cos()).exp(), 0.0);
            }
        }
        let (curv, own) = stack(&bundle, &metric);
        let deg = degree(&geo, &c1_form(&bundle, &curv, &own));
        assert!(deg.abs() < 1e-12, "degree {deg:.3e}");
    }

    #[test]
    fn projection_degree_reproduces_factor_degree() {
        let g = Grid::uniform(1, 32).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let plus = build_theta_bundle(&g, &[1]).unwrap();
        let minus = build_theta_bundle(&g, &[-1]).unwrap();
        let sum = build_direct_sum(&[&plus, &minus]).unwrap();
        let metric = build_compatible_metric(&sum, MetricSeed::Natural).unwrap();
        let own = OwnerIndex::build(sum.cover());
        let (conn, _) = chern_connection(&sum, &metric).unwrap();
        let (curv, _) = curvature(&sum, &conn).unwrap();
        let (lam, _) = lambda_f(&sum, &geo, &metric, &curv, &own).unwrap();
        let npts = g.npoints();
        let mut first = EndoField::zeros(npts, 2);
        let mut id = EndoField::zeros(npts, 2);
        for p in 0..npts {
            first.at_mut(p)[0] = C64::new(1.0, 0.0);
            id.at_mut(p)[0] = C64::new(1.0, 0.0);
            id.at_mut(p)[3] = C64::new(1.0, 0.0);
        }
        let zero = EndoField::zeros(npts, 2);
        let dv = degree_via_projection(&sum, &geo, &metric, &lam, &first).unwrap();
        assert!((dv - 1.0).abs() < 2e-3, "factor degree {dv:.6}");
        let dfull = degree_via_projection(&sum, &geo, &metric, &lam, &id).unwrap();
        let c1 = c1_form(&sum, &curv, &own);
        assert!((dfull - degree(&geo, &c1)).abs() < 1e-10);
        assert_eq!(degree_via_projection(&sum, &geo, &metric, &lam, &zero).unwrap(), 0.0);
        // non-projector input is rejected
        let mut half = EndoField::zeros(npts, 2);
        for p in 0..npts {
            half.at_mut(p)[0] = C64::new(0.55, 0.0);
            half.at_mut(p)[3] = C64::new(0.55, 0.0);
        }
        assert!(degree_via_projection(&sum, &geo, &metric, &lam, &half).is_err());
    }

    #[test]
    fn projection_functional_penalizes_nonconstant_sections() {
        // flat bundle, π = v·v† with v = (cos 2πx, sin 2πx): the functional
        // is −(1/2π)∫|∂̄π|² = −2π·σ(θ)², σ the discrete derivative symbol
        let g = Grid::uniform(1, 32).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let bundle = build_trivial_bundle(&g, 2).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let own = OwnerIndex::build(bundle.cover());
        let (conn, _) = chern_connection(&bundle, &metric).unwrap();
        let (curv, _) = curvature(&bundle, &conn).unwrap();
        let (lam, _) = lambda_f(&bundle, &geo, &metric, &curv, &own).unwrap();
        let mut pi = EndoField::zeros(g.npoints(), 2);
        for p in 0..g.npoints() {
            let x = g.coord_value(0, g.coords(p)[0]);
            let (cs, sn) = ((TAU * x).cos(), (TAU * x).sin());
            let m = pi.at_mut(p);
            m[0] = C64::new(cs * cs, 0.0);
            m[1] = C64::new(cs * sn, 0.0);
            m[2] = C64::new(cs * sn, 0.0);
            m[3] = C64::new(sn * sn, 0.0);
        }
        let val = degree_via_projection(&bundle, &geo, &metric, &lam, &pi).unwrap();
        let theta = 2.0 * TAU / 32.0; // π entries carry the doubled frequency
        let sigma = (8.0 * theta.sin() - (2.0 * theta).sin()) / (6.0 * theta);
        let want = -TAU * sigma * sigma;
        assert!((val - want).abs() < 1e-9, "functional {val:.9} want {want:.9}");
    }

    fn theta_sum_n2(
        da: [i64; 2],
        db: [i64; 2],
    ) -> (Grid, TorusGeometry, TwistedBundle, MetricField) {
        let g = Grid::uniform(2, 16).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let a = build_theta_bundle(&g, &da).unwrap();
        let b = build_theta_bundle(&g, &db).unwrap();
        let sum = build_direct_sum(&[&a, &b]).unwrap();
        let metric = build_compatible_metric(&sum, MetricSeed::Natural).unwrap();
        (g, geo, sum, metric)
    }

    #[test]
    fn split_sum_c2_matches_block_algebra() {
        let (g, geo, sum, metric) = theta_sum_n2([1, 0], [0, 1]);
        let (curv, own) = stack(&sum, &metric);
        let c2 = c2_density(&sum, &geo, &curv, &own).unwrap();
        // block oracle: c2 coordinate density = perm2(F₁, F₂)/π²
        let mut worst = 0.0f64;
        for p in 0..g.npoints() {
            let (c, b) = (own.owner[p] as usize, own.box_idx[p] as usize);
            let mut f1 = [C64::new(0.0, 0.0); 4];
            let mut f2 = [C64::new(0.0, 0.0); 4];
            for comp in 0..4 {
                let m = curv.at(c, b, comp);
                f1[comp] = m[0];
                f2[comp] = m[3];
            }
            let oracle = perm2(&f1, &f2).re / (PI * PI);
            worst = worst.max((c2[p] * geo.vol_density(p) - oracle).abs());
        }
        assert!(worst < 1e-12, "block algebra defect {worst:.3e}");
        let total = geo.integrate(&c2);
        assert!((total - 1.0).abs() < 2e-2, "∫c2 = {total:.4}");
    }

    #[test]
    fn bogomolov_vanishes_on_balanced_split() {
        let (_, geo, sum, metric) = theta_sum_n2([1, 1], [1, 1]);
        let (curv, own) = stack(&sum, &metric);
        let number = bogomolov_number(&sum, &geo, &curv, &own).unwrap();
        assert!(number.abs() < 1e-10, "number {number:.3e}");
        let (lhs, rhs) = bogomolov_decomposition(&sum, &geo, &metric, &curv, &own).unwrap();
        assert!(lhs.abs() < 1e-10 && rhs.abs() < 1e-10, "({lhs:.3e}, {rhs:.3e})");
    }

    #[test]
    fn bogomolov_is_negative_for_opposite_factors() {
        let (_, geo, sum, metric) = theta_sum_n2([1, 1], [-1, -1]);
        let (curv, own) = stack(&sum, &metric);
        let number = bogomolov_number(&sum, &geo, &curv, &own).unwrap();
        assert!((number + 4.0).abs() < 0.1, "number {number:.4}");
        let (lhs, rhs) = bogomolov_decomposition(&sum, &geo, &metric, &curv, &own).unwrap();
        assert!(
            (number - lhs / (4.0 * PI * PI)).abs() < 1e-9,
            "number {number:.6} vs lhs/4π² {:.6}",
            lhs / (4.0 * PI * PI)
        );
        let scale = lhs.abs().max(1.0);
        assert!((lhs - rhs).abs() < 1e-8 * scale, "identity gap {:.3e}", lhs - rhs);
    }

    #[test]
    fn conformal_bound_holds_and_is_tight_when_flat() {
        let g = Grid::uniform(1, 16).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let bundle = build_trivial_bundle(&g, 2).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let (lhs, rhs) = conformal_residual_bound_check(&bundle, &geo, &metric).unwrap();
        assert!(lhs < 1e-10 && rhs < 1e-10, "({lhs:.3e}, {rhs:.3e})");

        let g = Grid::uniform(1, 32).unwrap();
        let phi: Vec<f64> =
            (0..g.npoints()).map(|p| 0.3 * (TAU * g.coord_value(0, g.coords(p)[0])).cos()).collect();
        let geo = TorusGeometry::flat(g.clone()).with_conformal(phi).unwrap();
        let bundle = build_theta_bundle(&g, &[1]).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Natural).unwrap();
        let (lhs, rhs) = conformal_residual_bound_check(&bundle, &geo, &metric).unwrap();
        assert!(lhs <= rhs + 1e-12, "bound violated: {lhs:.6} > {rhs:.6}");
        assert!(rhs > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn traceless_wedge_identity_is_pointwise(
            seed in proptest::array::uniform32(-1.0f64..1.0),
            gseed in proptest::array::uniform4(0.3f64..1.5),
        ) {
            // random K-Hermitian curvature block at one point, random base
            // Gram: −4·perm2E(C⊥,C⊥) = (pair_form − pair_Λ)·4·det G
            let r = 2usize;
            let k = [
                C64::new(gseed[0] + 1.0, 0.0), C64::new(0.2, 0.1),
                C64::new(0.2, -0.1), C64::new(gseed[1] + 1.0, 0.0),
            ];
            let kinv = linalg::inverse(r, &k).unwrap();
            let base = [
                C64::new(gseed[2] + 1.0, 0.0), C64::new(0.3, -0.2),
                C64::new(0.3, 0.2), C64::new(gseed[3] + 1.0, 0.0),
            ];
            let binv = linalg::inverse(2, &base).unwrap();
            let detg = (base[0] * base[3] - base[1] * base[2]).re;
            // free data: C₀₀, C₁₁ K-self-adjoint; C₀₁ free; C₁₀ forced
            let mat = |o: usize| {
                [
                    C64::new(seed[o], seed[o + 1]),
                    C64::new(seed[o + 2], seed[o + 3]),
                    C64::new(seed[o + 4], seed[o + 5]),
                    C64::new(seed[o + 6], seed[o + 7]),
                ]
            };
            let sym = |m: [C64; 4]| {
                let mut s = adj_k(r, &kinv, &k, &m);
                for (a, b) in s.iter_mut().zip(m.iter()) {
                    *a = 0.5 * (*a + b);
                }
                s
            };
            let c00 = sym(mat(0));
            let c11 = sym(mat(8));
            let c01 = mat(16).to_vec();
            let c10 = adj_k(r, &kinv, &k, &c01);
            let mut comps = [c00, c01, c10, c11];
            for m in comps.iter_mut() {
                let t = linalg::trace(r, m) / r as f64;
                for i in 0..r {
                    m[i * r + i] -= t;
                }
            }
            let at = |i: usize| comps[i].as_slice();
            let e2 = trace_prod(r, at(0), at(3)) + trace_prod(r, at(3), at(0))
                - trace_prod(r, at(1), at(2))
                - trace_prod(r, at(2), at(1));
            let lhs = -4.0 * e2.re;
            let mut x = vec![C64::new(0.0, 0.0); r * r];
            for be in 0..2 {
                for al in 0..2 {
                    linalg::axpy(binv[be * 2 + al], at(al * 2 + be), &mut x);
                }
            }
            let mut form_norm = 0.0;
            for al in 0..2 {
                for be in 0..2 {
                    for ga in 0..2 {
                        for de in 0..2 {
                            let w = binv[be * 2 + ga] * binv[de * 2 + al];
                            let adj = adj_k(r, &kinv, &k, at(de * 2 + ga));
                            form_norm += (w * trace_prod(r, at(al * 2 + be), &adj)).re;
                        }
                    }
                }
            }
            let rhs = (form_norm - hs_norm_sq(r, &kinv, &k, &x)) * 4.0 * detg;
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()),
                "lhs {lhs:.9} rhs {rhs:.9}");
        }
    }
}
