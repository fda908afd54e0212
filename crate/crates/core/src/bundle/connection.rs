//! Chern connection, curvature, and the contracted curvature operator.
//!
//! Per chart the connection is A_α = G⁻¹·∂_α G (type (1,0)); the curvature in
//! raw (1,1) storage is F[α][β] = −∂_β̄ A_α − B[α][β]·Id, which already
//! absorbs the twist's B-field and therefore glues homogeneously,
//! F_j = φ_ij⁻¹·F_i·φ_ij.  The connection itself glues affinely,
//! A_j = φ_ij⁻¹·A_iφ_ij + φ_ij⁻¹∂φ_ij + β_ji·Id; shipped twists carry β = 0,
//! the report includes the term regardless.  Derivatives act inside each
//! chart box: full axes wrap, subdivided axes lose one stencil radius of
//! validity per derivative.

use num_complex::Complex64 as C64;

use crate::bundle::field::{ChartMatrixField, EndoField, OwnerIndex};
use crate::bundle::metric::MetricField;
use crate::bundle::transition::TwistedBundle;
use crate::constants::fd_tol;
use crate::geometry::TorusGeometry;
use crate::linalg;
use crate::twist::{box_index, region_wirtinger, ChartCover};
use crate::{Error, Result};

/// d/dx_axis of a chunked chart-box array (chunk size `cs` per box point).
/// Entries whose stencil would leave the box across a subdivided axis stay
/// zero; full axes wrap.
pub(crate) fn box_d1(
    cover: &ChartCover,
    c: usize,
    cs: usize,
    src: &[C64],
    axis: usize,
) -> Vec<C64> {
    let grid = &cover.grid;
    let chart = &cover.charts[c];
    let order = grid.stencil_order();
    let taps = order.d1();
    let radius = order.radius();
    let naxes = chart.len.len();
    let mut stride = vec![1usize; naxes];
    for a in (0..naxes - 1).rev() {
        stride[a] = stride[a + 1] * chart.len[a + 1];
    }
    let wrap = !cover.sub_axes.contains(&axis);
    let len_a = chart.len[axis];
    let inv_h = 1.0 / grid.spacing[axis];
    let mut out = vec![C64::new(0.0, 0.0); src.len()];
    for b in 0..chart.box_points() {
        let la = (b / stride[axis]) % len_a;
        if !wrap && (la < radius || la + radius >= len_a) {
            continue;
        }
        for &(off, w) in taps {
            let nl = if wrap {
                (la as isize + off).rem_euclid(len_a as isize) as usize
            } else {
                (la as isize + off) as usize
            };
            let nb = (b as isize + (nl as isize - la as isize) * stride[axis] as isize) as usize;
            let wc = C64::new(w * inv_h, 0.0);
            for e in 0..cs {
                out[b * cs + e] += wc * src[nb * cs + e];
            }
        }
    }
    out
}

/// Wirtinger derivative of a chunked box array: ∂_α = (d_{2α} − i·d_{2α+1})/2
/// or ∂_ᾱ = (d_{2α} + i·d_{2α+1})/2.
pub(crate) fn box_wirtinger(
    cover: &ChartCover,
    c: usize,
    cs: usize,
    src: &[C64],
    alpha: usize,
    anti: bool,
) -> Vec<C64> {
    let dx = box_d1(cover, c, cs, src, 2 * alpha);
    let dy = box_d1(cover, c, cs, src, 2 * alpha + 1);
    let i = C64::new(0.0, if anti { 0.5 } else { -0.5 });
    dx.iter().zip(&dy).map(|(u, v)| 0.5 * u + i * v).collect()
}

#[derive(Debug, Clone)]
pub struct ConnectionReport {
    /// sup |A_j − φ_ij⁻¹A_iφ_ij − φ_ij⁻¹∂φ_ij − β_ji·Id| over overlap points
    /// where both charts' stencils are valid.
    pub gluing_defect: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Chern connection of a compatible metric, chartwise A_α = G⁻¹·∂_α G.
pub fn chern_connection(
    bundle: &TwistedBundle,
    metric: &MetricField,
) -> Result<(ChartMatrixField, ConnectionReport)> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let rr = r * r;
    let radius = grid.stencil_order().radius();
    let mut a = ChartMatrixField::zeros(cover, n, r, radius);
    for (c, chart) in cover.charts.iter().enumerate() {
        let dg: Vec<Vec<C64>> = (0..n)
            .map(|al| box_wirtinger(cover, c, rr, &metric.charts[c], al, false))
            .collect();
        for b in 0..chart.box_points() {
            if !a.valid(cover, c, &chart.local_coords(b)) {
                continue;
            }
            let ginv = linalg::inverse(r, metric.gram(c, b))?;
            for (al, d) in dg.iter().enumerate() {
                let am = linalg::mul(r, &ginv, &d[b * rr..(b + 1) * rr]);
                a.at_mut(c, b, al).copy_from_slice(&am);
            }
        }
    }
    let report = gluing_report(bundle, &a);
    Ok((a, report))
}

fn gluing_report(bundle: &TwistedBundle, a: &ChartMatrixField) -> ConnectionReport {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let rr = r * r;
    let order = grid.stencil_order();
    let tol = fd_tol(grid.max_spacing());
    let mut sup = 0.0f64;
    for (idx, pt) in bundle.pairs.iter().enumerate() {
        let pd = &bundle.twist.pairs[idx];
        let (i, j) = pd.pair;
        let region = &pd.region;
        // FD ∂φ_ij per matrix entry and complex coordinate
        let mut dphi = vec![vec![None; region.points.len()]; n * rr];
        for e in 0..rr {
            let get = |p: usize| {
                let slot = crate::twist::sparse_slot(&region.points, p).expect("region point");
                pt.phi[slot * rr + e]
            };
            for al in 0..n {
                let (holo, _) = region_wirtinger(grid, region, &get, al, order);
                dphi[al * rr + e] = holo;
            }
        }
        for (slot, &p32) in region.points.iter().enumerate() {
            let p = p32 as usize;
            let coords = grid.coords(p);
            let bi = box_index(cover, i, &coords).expect("pair point in chart i");
            let bj = box_index(cover, j, &coords).expect("pair point in chart j");
            if !a.valid(cover, i, &cover.charts[i].local_coords(bi))
                || !a.valid(cover, j, &cover.charts[j].local_coords(bj))
            {
                continue;
            }
            let phi = &pt.phi[slot * rr..(slot + 1) * rr];
            let inv = &pt.phi_inv[slot * rr..(slot + 1) * rr];
            let beta_ji = bundle.twist.beta_at(j, i, p);
            for al in 0..n {
                let mut dmat = vec![C64::new(0.0, 0.0); rr];
                let mut complete = true;
                for e in 0..rr {
                    match dphi[al * rr + e][slot] {
                        Some(v) => dmat[e] = v,
                        None => complete = false,
                    }
                }
                if !complete {
                    continue;
                }
                let mut rhs = linalg::mul3(r, inv, a.at(i, bi, al), phi);
                let tail = linalg::mul(r, inv, &dmat);
                linalg::axpy(C64::new(1.0, 0.0), &tail, &mut rhs);
                if let Some(beta) = &beta_ji {
                    for t in 0..r {
                        rhs[t * r + t] += beta[al];
                    }
                }
                let mut diff = a.at(j, bj, al).to_vec();
                linalg::axpy(C64::new(-1.0, 0.0), &rhs, &mut diff);
                sup = sup.max(linalg::sup_entry(&diff));
            }
        }
    }
    ConnectionReport { gluing_defect: sup, tol, pass: sup <= tol }
}

#[derive(Debug, Clone)]
pub struct CurvatureReport {
    /// sup |F_j − φ_ij⁻¹·F_i·φ_ij| over valid overlap points; the B-field is
    /// already inside F, so the comparison is homogeneous.
    pub gauge_defect: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Curvature in raw storage, F[α][β] = −∂_β̄A_α − B[α][β]·Id (component
/// index α·n + β).
pub fn curvature(
    bundle: &TwistedBundle,
    conn: &ChartMatrixField,
) -> Result<(ChartMatrixField, CurvatureReport)> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let rr = r * r;
    let radius = grid.stencil_order().radius();
    let margin = conn.margin + radius;
    let mut f = ChartMatrixField::zeros(cover, n * n, r, margin);
    for (c, chart) in cover.charts.iter().enumerate() {
        // derivative of the whole comp block at once: chunk n·r²
        let danti: Vec<Vec<C64>> = (0..n)
            .map(|be| box_wirtinger(cover, c, n * rr, &conn.charts[c], be, true))
            .collect();
        let bfield = &bundle.twist.b[c];
        for b in 0..chart.box_points() {
            if !f.valid(cover, c, &chart.local_coords(b)) {
                continue;
            }
            let bslice = bfield.at_local(b);
            for al in 0..n {
                for be in 0..n {
                    let src = &danti[be][(b * n + al) * rr..(b * n + al + 1) * rr];
                    let dst = f.at_mut(c, b, al * n + be);
                    for e in 0..rr {
                        dst[e] = -src[e];
                    }
                    let bv = bslice[al * n + be];
                    for t in 0..r {
                        dst[t * r + t] -= bv;
                    }
                }
            }
        }
    }
    let report = gauge_report(bundle, &f);
    Ok((f, report))
}

fn gauge_report(bundle: &TwistedBundle, f: &ChartMatrixField) -> CurvatureReport {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let r = bundle.rank;
    let rr = r * r;
    let tol = fd_tol(grid.max_spacing());
    let mut sup = 0.0f64;
    for (idx, pt) in bundle.pairs.iter().enumerate() {
        let pd = &bundle.twist.pairs[idx];
        let (i, j) = pd.pair;
        for (slot, &p32) in pd.region.points.iter().enumerate() {
            let coords = grid.coords(p32 as usize);
            let bi = box_index(cover, i, &coords).expect("pair point in chart i");
            let bj = box_index(cover, j, &coords).expect("pair point in chart j");
            if !f.valid(cover, i, &cover.charts[i].local_coords(bi))
                || !f.valid(cover, j, &cover.charts[j].local_coords(bj))
            {
                continue;
            }
            let phi = &pt.phi[slot * rr..(slot + 1) * rr];
            let inv = &pt.phi_inv[slot * rr..(slot + 1) * rr];
            for comp in 0..f.ncomp {
                let routed = linalg::mul3(r, inv, f.at(i, bi, comp), phi);
                let mut diff = f.at(j, bj, comp).to_vec();
                linalg::axpy(C64::new(-1.0, 0.0), &routed, &mut diff);
                sup = sup.max(linalg::sup_entry(&diff));
            }
        }
    }
    CurvatureReport { gauge_defect: sup, tol, pass: sup <= tol }
}

/// Curvature of H through a reference metric K: F_H = F_K + ∂̄(h⁻¹·∂_K h)
/// with h = K⁻¹H and ∂_K h = ∂h + [A_K, h].  Returns the incremental field
/// and its sup deviation from the directly recomputed F_H over the common
/// valid zone.
pub fn curvature_incremental(
    bundle: &TwistedBundle,
    metric_k: &MetricField,
    conn_k: &ChartMatrixField,
    curv_k: &ChartMatrixField,
    metric_h: &MetricField,
) -> Result<(ChartMatrixField, f64)> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let n = grid.n;
    let r = bundle.rank;
    let rr = r * r;
    let radius = grid.stencil_order().radius();
    let margin = curv_k.margin.max(conn_k.margin + radius) + radius;
    let mut out = ChartMatrixField::zeros(cover, n * n, r, margin);
    for (c, chart) in cover.charts.iter().enumerate() {
        let npts = chart.box_points();
        let mut h = vec![C64::new(0.0, 0.0); npts * rr];
        for b in 0..npts {
            let kinv = linalg::inverse(r, metric_k.gram(c, b))?;
            h[b * rr..(b + 1) * rr]
                .copy_from_slice(&linalg::mul(r, &kinv, metric_h.gram(c, b)));
        }
        let dh: Vec<Vec<C64>> =
            (0..n).map(|al| box_wirtinger(cover, c, rr, &h, al, false)).collect();
        // X_α = h⁻¹(∂_α h + [A_K[α], h]), valid one radius past conn margin
        let mut x = vec![C64::new(0.0, 0.0); npts * n * rr];
        for b in 0..npts {
            if !conn_k.valid(cover, c, &chart.local_coords(b)) {
                continue;
            }
            let hb = &h[b * rr..(b + 1) * rr];
            let hinv = linalg::inverse(r, hb)?;
            for al in 0..n {
                let mut d = dh[al][b * rr..(b + 1) * rr].to_vec();
                let comm = linalg::commutator(r, conn_k.at(c, b, al), hb);
                linalg::axpy(C64::new(1.0, 0.0), &comm, &mut d);
                x[(b * n + al) * rr..(b * n + al + 1) * rr]
                    .copy_from_slice(&linalg::mul(r, &hinv, &d));
            }
        }
        let danti: Vec<Vec<C64>> =
            (0..n).map(|be| box_wirtinger(cover, c, n * rr, &x, be, true)).collect();
        for b in 0..npts {
            if !out.valid(cover, c, &chart.local_coords(b)) {
                continue;
            }
            for al in 0..n {
                for be in 0..n {
                    let src = &danti[be][(b * n + al) * rr..(b * n + al + 1) * rr];
                    let base = curv_k.at(c, b, al * n + be);
                    let dst = out.at_mut(c, b, al * n + be);
                    for e in 0..rr {
                        dst[e] = base[e] - src[e];
                    }
                }
            }
        }
    }
    // agreement against the direct route
    let (conn_h, _) = chern_connection(bundle, metric_h)?;
    let (curv_h, _) = curvature(bundle, &conn_h)?;
    let mut defect = 0.0f64;
    for (c, chart) in cover.charts.iter().enumerate() {
        for b in 0..chart.box_points() {
            if !out.valid(cover, c, &chart.local_coords(b)) {
                continue;
            }
            for comp in 0..n * n {
                for (u, v) in out.at(c, b, comp).iter().zip(curv_h.at(c, b, comp)) {
                    defect = defect.max((u - v).norm());
                }
            }
        }
    }
    Ok((out, defect))
}

#[derive(Debug, Clone)]
pub struct LambdaReport {
    /// sup |X^{*H} − X| with X = √−1Λ_ωF, adjoint taken in the bundle metric.
    pub self_adjoint_defect: f64,
    /// sup |Im tr X|.
    pub trace_imag: f64,
    pub tol: f64,
    pub pass: bool,
}

/// √−1·Λ_ω F as a global owner-gauge endo field:
/// X = e^{−conf}·Σ g^{βα}·F[α][β] per point.
pub fn lambda_f(
    bundle: &TwistedBundle,
    geo: &TorusGeometry,
    metric: &MetricField,
    curv: &ChartMatrixField,
    own: &OwnerIndex,
) -> Result<(EndoField, LambdaReport)> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    if geo.grid.dims != grid.dims {
        return Err(Error::ShapeMismatch("geometry grid differs from bundle grid".into()));
    }
    if curv.margin > cover.halfwidth {
        return Err(Error::Config(
            "curvature margin exceeds the overlap halfwidth; owned points invalid".into(),
        ));
    }
    let n = grid.n;
    let r = bundle.rank;
    let binv = geo.base_inverse();
    let mut x = EndoField::zeros(grid.npoints(), r);
    let mut self_adj = 0.0f64;
    let mut tr_im = 0.0f64;
    for p in 0..grid.npoints() {
        let c = own.owner[p] as usize;
        let b = own.box_idx[p] as usize;
        let scale = 1.0 / geo.conf(p);
        let dst = x.at_mut(p);
        for be in 0..n {
            for al in 0..n {
                let w = binv[be * n + al] * scale;
                for (d, s) in dst.iter_mut().zip(curv.at(c, b, al * n + be)) {
                    *d += w * s;
                }
            }
        }
        let g = metric.gram(c, b);
        let ginv = linalg::inverse(r, g)?;
        let star = linalg::mul3(r, &ginv, &linalg::adjoint(r, dst), g);
        let mut diff = star;
        linalg::axpy(C64::new(-1.0, 0.0), dst, &mut diff);
        self_adj = self_adj.max(linalg::sup_entry(&diff));
        tr_im = tr_im.max(linalg::trace(r, dst).im.abs());
    }
    let tol = fd_tol(grid.max_spacing());
    let report = LambdaReport {
        self_adjoint_defect: self_adj,
        trace_imag: tr_im,
        tol,
        pass: self_adj <= tol,
    };
    Ok((x, report))
}
