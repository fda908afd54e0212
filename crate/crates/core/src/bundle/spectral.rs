//! Pointwise functional calculus in the metric frame.
//!
//! An endomorphism X self-adjoint for the Gram G turns Hermitian under the
//! frame change Y = L†·X·L^{−†}, G = L·L†.  Its eigenvalues are global
//! scalars (chart conjugation cannot move them); functions f(X) and
//! two-variable kernels Ψ(s) act through the eigenbasis E = L^{−†}·U with
//! exact inverse E⁻¹ = U†·L†.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::bundle::field::{chart_endo, EndForm, EndoField, OwnerIndex};
use crate::bundle::metric::MetricField;
use crate::bundle::transition::TwistedBundle;
use crate::constants::POSITIVITY_FLOOR;
use crate::linalg;
use crate::twist::box_index;
use crate::{Error, Result};

/// Eigenvalue pairs closer than this take the diagonal kernel branch.
const KERNEL_GAP: f64 = 1e-8;

/// Eigen-decomposition of a G-self-adjoint endomorphism: ascending real
/// eigenvalues, eigenvector columns E, and E⁻¹ with X = E·diag(λ)·E⁻¹.
pub fn point_eig(r: usize, g: &[C64], x: &[C64]) -> Result<(Vec<f64>, Vec<C64>, Vec<C64>)> {
    let l = linalg::cholesky(r, g, "metric Gram")?;
    let linv = linalg::lower_tri_inverse(r, &l);
    let linv_h = linalg::adjoint(r, &linv);
    let lh = linalg::adjoint(r, &l);
    let y = linalg::mul3(r, &lh, x, &linv_h);
    let (vals, u) = linalg::herm_eig(r, &y);
    let e = linalg::mul(r, &linv_h, &u);
    let einv = linalg::mul(r, &linalg::adjoint(r, &u), &lh);
    Ok((vals, e, einv))
}

/// f(X) = E·f(Λ)·E⁻¹ for G-self-adjoint X.
pub fn point_fun(r: usize, g: &[C64], x: &[C64], f: impl Fn(f64) -> f64) -> Result<Vec<C64>> {
    let (vals, e, einv) = point_eig(r, g, x)?;
    let mut d = vec![C64::new(0.0, 0.0); r * r];
    for (i, &v) in vals.iter().enumerate() {
        d[i * r + i] = C64::new(f(v), 0.0);
    }
    Ok(linalg::mul3(r, &e, &d, &einv))
}

/// Two-variable spectral kernel with a dedicated branch for eigenvalue pairs
/// inside the degeneracy gap.
#[derive(Clone, Copy)]
pub struct Kernel2 {
    pub off: fn(f64, f64) -> f64,
    pub diag: fn(f64) -> f64,
}

/// Divided difference of t ↦ e^t normalized at the first argument:
/// Ψ(x,y) = (e^{y−x} − 1)/(y − x), Ψ(x,x) = 1.  Strictly positive.
pub fn dexp_kernel() -> Kernel2 {
    Kernel2 { off: |x, y| ((y - x).exp() - 1.0) / (y - x), diag: |_| 1.0 }
}

fn kernel_at(kernel: &Kernel2, x: f64, y: f64) -> f64 {
    if (x - y).abs() < KERNEL_GAP {
        (kernel.diag)(0.5 * (x + y))
    } else {
        (kernel.off)(x, y)
    }
}

/// Ψ(s)(A) = E·(Ψ(λ_i,λ_j)·Â_ij)·E⁻¹ with Â = E⁻¹·A·E, where (λ, E) is the
/// eigensystem of the G-self-adjoint s.
pub fn point_psi(
    r: usize,
    g: &[C64],
    s: &[C64],
    a: &[C64],
    kernel: &Kernel2,
) -> Result<Vec<C64>> {
    let (vals, e, einv) = point_eig(r, g, s)?;
    let mut ahat = linalg::mul3(r, &einv, a, &e);
    for i in 0..r {
        for j in 0..r {
            ahat[i * r + j] *= kernel_at(kernel, vals[i], vals[j]);
        }
    }
    Ok(linalg::mul3(r, &e, &ahat, &einv))
}

fn owner_gram<'a>(own: &OwnerIndex, metric: &'a MetricField, p: usize) -> &'a [C64] {
    metric.gram(own.owner[p] as usize, own.box_idx[p] as usize)
}

fn spectral_map(
    own: &OwnerIndex,
    metric: &MetricField,
    x: &EndoField,
    f: fn(f64) -> f64,
    positive_domain: Option<&str>,
) -> Result<EndoField> {
    let r = x.r;
    let rr = r * r;
    let mut out = EndoField::zeros(x.npoints(), r);
    out.data
        .par_chunks_mut(rr)
        .enumerate()
        .try_for_each(|(p, dst)| -> Result<()> {
            let g = owner_gram(own, metric, p);
            let (vals, e, einv) = point_eig(r, g, x.at(p))?;
            if let Some(what) = positive_domain {
                let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if vals[0] <= POSITIVITY_FLOOR * scale {
                    return Err(Error::PositivityFloor {
                        floor: POSITIVITY_FLOOR,
                        context: format!("{what}: eigenvalue {:.3e} at point {p}", vals[0]),
                    });
                }
            }
            let mut d = vec![C64::new(0.0, 0.0); rr];
            for (i, &v) in vals.iter().enumerate() {
                d[i * r + i] = C64::new(f(v), 0.0);
            }
            dst.copy_from_slice(&linalg::mul3(r, &e, &d, &einv));
            Ok(())
        })?;
    Ok(out)
}

/// log X for a positive G-self-adjoint field, pointwise in owner gauge.
pub fn endo_log(own: &OwnerIndex, metric: &MetricField, x: &EndoField) -> Result<EndoField> {
    spectral_map(own, metric, x, f64::ln, Some("endo_log"))
}

/// e^X for a G-self-adjoint field.
pub fn endo_exp(own: &OwnerIndex, metric: &MetricField, x: &EndoField) -> Result<EndoField> {
    spectral_map(own, metric, x, f64::exp, None)
}

/// Ψ(s)(a) over a global endo field.
pub fn psi_apply(
    own: &OwnerIndex,
    metric: &MetricField,
    s: &EndoField,
    a: &EndoField,
    kernel: &Kernel2,
) -> Result<EndoField> {
    let r = s.r;
    let rr = r * r;
    let mut out = EndoField::zeros(s.npoints(), r);
    out.data
        .par_chunks_mut(rr)
        .enumerate()
        .try_for_each(|(p, dst)| -> Result<()> {
            dst.copy_from_slice(&point_psi(
                r,
                owner_gram(own, metric, p),
                s.at(p),
                a.at(p),
                kernel,
            )?);
            Ok(())
        })?;
    Ok(out)
}

/// Ψ(s)(a) componentwise over a form field, sharing one eigensystem per
/// point across the components.
pub fn psi_apply_form(
    own: &OwnerIndex,
    metric: &MetricField,
    s: &EndoField,
    a: &EndForm,
    kernel: &Kernel2,
) -> Result<EndForm> {
    let r = s.r;
    let rr = r * r;
    let nc = a.ncomp;
    let mut out = EndForm::zeros(a.npoints(), 1, r, a.kind);
    out.ncomp = nc;
    out.data = vec![C64::new(0.0, 0.0); a.npoints() * nc * rr];
    out.data
        .par_chunks_mut(nc * rr)
        .enumerate()
        .try_for_each(|(p, dst)| -> Result<()> {
            let (vals, e, einv) = point_eig(r, owner_gram(own, metric, p), s.at(p))?;
            for comp in 0..nc {
                let mut ahat = linalg::mul3(r, &einv, a.at(p, comp), &e);
                for i in 0..r {
                    for j in 0..r {
                        ahat[i * r + j] *= kernel_at(kernel, vals[i], vals[j]);
                    }
                }
                dst[comp * rr..(comp + 1) * rr]
                    .copy_from_slice(&linalg::mul3(r, &e, &ahat, &einv));
            }
            Ok(())
        })?;
    Ok(out)
}

/// sup over pair overlaps of the eigenvalue spread between the two chart
/// gauges of a G-self-adjoint field.
pub fn eigenvalue_globality_defect(
    bundle: &TwistedBundle,
    metric: &MetricField,
    x: &EndoField,
) -> Result<f64> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let r = x.r;
    let rr = r * r;
    let views: Vec<Vec<C64>> =
        (0..cover.ncharts()).map(|c| chart_endo(bundle, x, c)).collect();
    let mut sup = 0.0f64;
    for pd in &bundle.twist.pairs {
        let (i, j) = pd.pair;
        for &p32 in &pd.region.points {
            let coords = grid.coords(p32 as usize);
            let bi = box_index(cover, i, &coords).expect("pair point in chart i");
            let bj = box_index(cover, j, &coords).expect("pair point in chart j");
            let (vi, _, _) = point_eig(r, metric.gram(i, bi), &views[i][bi * rr..(bi + 1) * rr])?;
            let (vj, _, _) = point_eig(r, metric.gram(j, bj), &views[j][bj * rr..(bj + 1) * rr])?;
            for (a, b) in vi.iter().zip(&vj) {
                sup = sup.max((a - b).abs());
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::metric::{build_compatible_metric, MetricSeed};
    use crate::bundle::transition::{
        build_clock_shift_bundle, build_direct_sum, build_theta_bundle, build_trivial_bundle,
    };
    use crate::grid::Grid;

    fn synth_herm(r: usize, p: usize, shift: f64) -> Vec<C64> {
        let mut m = vec![C64::new(0.0, 0.0); r * r];
        for i in 0..r {
            for j in 0..r {
                let t = p as f64 * 0.31 + (i * r + j) as f64 * 0.77;
                let v = C64::new(t.sin() * 0.4, (t * 1.7).cos() * 0.4);
                m[i * r + j] += v;
                m[j * r + i] += v.conj();
            }
            m[i * r + i] += C64::new(shift, 0.0);
        }
        m
    }

    #[test]
    fn constant_one_kernel_acts_as_identity() {
        let g = Grid::uniform(1, 16).unwrap();
        let a1 = build_theta_bundle(&g, &[1]).unwrap();
        let a2 = build_theta_bundle(&g, &[-1]).unwrap();
        let bundle = build_direct_sum(&[&a1, &a2]).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Natural).unwrap();
        let own = OwnerIndex::build(bundle.cover());
        let r = bundle.rank;
        let n = bundle.grid().npoints();
        let mut s = EndoField::zeros(n, r);
        let mut a = EndoField::zeros(n, r);
        for p in 0..n {
            let gram = owner_gram(&own, &metric, p).to_vec();
            let ginv = linalg::inverse(r, &gram).unwrap();
            s.at_mut(p).copy_from_slice(&linalg::mul(r, &ginv, &synth_herm(r, p, 0.0)));
            a.at_mut(p).copy_from_slice(&linalg::mul(r, &ginv, &synth_herm(r, p + 7, 0.0)));
        }
        let one = Kernel2 { off: |_, _| 1.0, diag: |_| 1.0 };
        let b = psi_apply(&own, &metric, &s, &a, &one).unwrap();
        for p in (0..n).step_by(13) {
            for (u, v) in a.at(p).iter().zip(b.at(p)) {
                assert!((u - v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_unit_scales_by_kernel_value() {
        // s = diag(0.7, −0.2), A = e₁⊗e²: Ψ(s)(A) = Ψ(0.7, −0.2)·A, for the
        // flat Gram and for diag(2, 5) alike
        let s = vec![
            C64::new(0.7, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-0.2, 0.0),
        ];
        let mut a = vec![C64::new(0.0, 0.0); 4];
        a[1] = C64::new(1.0, 0.0);
        let kernel = Kernel2 { off: |x, y| x + 2.0 * y, diag: |m| 3.0 * m };
        let expect = 0.7 + 2.0 * (-0.2);
        for gram in [linalg::identity(2), {
            let mut g = linalg::identity(2);
            g[0] = C64::new(2.0, 0.0);
            g[3] = C64::new(5.0, 0.0);
            g
        }] {
            let b = point_psi(2, &gram, &s, &a, &kernel).unwrap();
            assert!((b[1] - C64::new(expect, 0.0)).norm() < 1e-14, "{b:?}");
            assert!(b[0].norm() < 1e-14 && b[2].norm() < 1e-14 && b[3].norm() < 1e-14);
        }
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        let gram = vec![
            C64::new(2.0, 0.0),
            C64::new(0.3, 0.1),
            C64::new(0.3, -0.1),
            C64::new(1.0, 0.0),
        ];
        let m = vec![
            C64::new(1.5, 0.0),
            C64::new(0.2, -0.4),
            C64::new(0.2, 0.4),
            C64::new(2.5, 0.0),
        ];
        let ginv = linalg::inverse(2, &gram).unwrap();
        let x = linalg::mul(2, &ginv, &m);
        let (vals, e, einv) = point_eig(2, &gram, &x).unwrap();
        // independent route: roots of λ² − tr(X)·λ + det(X)
        let tr = linalg::trace(2, &x).re;
        let det = linalg::det(2, &x).re;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
        assert!((vals[0] - lo).abs() < 1e-12 && (vals[1] - hi).abs() < 1e-12);
        // E·Λ·E⁻¹ reproduces X
        let mut d = vec![C64::new(0.0, 0.0); 4];
        d[0] = C64::new(vals[0], 0.0);
        d[3] = C64::new(vals[1], 0.0);
        let back = linalg::mul3(2, &e, &d, &einv);
        for (u, v) in back.iter().zip(&x) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn log_exp_round_trip_on_fields() {
        let bundle = build_trivial_bundle(&Grid::uniform(1, 16).unwrap(), 2).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let own = OwnerIndex::build(bundle.cover());
        let n = bundle.grid().npoints();
        let mut x = EndoField::zeros(n, 2);
        for p in 0..n {
            x.at_mut(p).copy_from_slice(&synth_herm(2, p, 2.0));
        }
        let logs = endo_log(&own, &metric, &x).unwrap();
        let back = endo_exp(&own, &metric, &logs).unwrap();
        let mut worst = 0.0f64;
        for (u, v) in back.data.iter().zip(&x.data) {
            worst = worst.max((u - v).norm());
        }
        assert!(worst < 1e-10, "round trip defect {worst:.3e}");
    }

    #[test]
    fn log_rejects_semidefinite_input() {
        let bundle = build_trivial_bundle(&Grid::uniform(1, 16).unwrap(), 2).unwrap();
        let metric = build_compatible_metric(&bundle, MetricSeed::Identity).unwrap();
        let own = OwnerIndex::build(bundle.cover());
        let mut x = EndoField::zeros(bundle.grid().npoints(), 2);
        for p in 0..x.npoints() {
            x.at_mut(p).copy_from_slice(&linalg::identity(2));
        }
        x.at_mut(40)[3] = C64::new(0.0, 0.0);
        match endo_log(&own, &metric, &x) {
            Err(Error::PositivityFloor { .. }) => {}
            other => panic!("expected positivity error, got {other:?}"),
        }
    }

    #[test]
    fn dexp_kernel_is_exp_divided_difference() {
        let k = dexp_kernel();
        for (x, y) in [(0.0, 1.0), (-2.0, 0.5), (1.3, 1.2), (3.0, -3.0)] {
            let got = (k.off)(x, y) * (y - x);
            let want = (y - x).exp() - 1.0;
            assert!((got - want).abs() < 1e-14);
            assert!((k.off)(x, y) > 0.0);
        }
        assert_eq!((k.diag)(0.4), 1.0);
    }

    #[test]
    fn positive_kernel_gives_nonnegative_quadratic_form() {
        // ⟨A, Ψ(s)(A)⟩_G = Σ Ψ(λᵢ,λⱼ)|Âᵢⱼ|² ≥ 0 for the dexp kernel
        let gram = synth_herm(3, 5, 3.0);
        let ginv = linalg::inverse(3, &gram).unwrap();
        let s = linalg::mul(3, &ginv, &synth_herm(3, 11, 0.0));
        let mut a = vec![C64::new(0.0, 0.0); 9];
        for (k, v) in a.iter_mut().enumerate() {
            let t = k as f64 * 0.9;
            *v = C64::new(t.sin(), t.cos() * 0.6);
        }
        let k = dexp_kernel();
        let b = point_psi(3, &gram, &s, &a, &k).unwrap();
        // ⟨A,B⟩_G = tr(G⁻¹·A†·G·B)
        let astar = linalg::mul3(3, &ginv, &linalg::adjoint(3, &a), &gram);
        let q = linalg::trace(3, &linalg::mul(3, &astar, &b));
        assert!(q.im.abs() < 1e-12);
        assert!(q.re >= 0.0);
        // independent sum over the orthonormalized eigenframe, Â = E⁻¹·A·E
        let (vals, e, einv) = point_eig(3, &gram, &s).unwrap();
        let ahat = linalg::mul3(3, &einv, &a, &e);
        let mut direct = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                direct += kernel_at(&k, vals[i], vals[j]) * ahat[i * 3 + j].norm_sqr();
            }
        }
        assert!((q.re - direct).abs() < 1e-10 * direct.max(1.0), "{} vs {direct}", q.re);
    }

    #[test]
    fn eigenvalues_agree_across_chart_gauges() {
        // clock-shift: identity metric, monomial conjugations
        let b1 = build_clock_shift_bundle(&Grid::uniform(1, 16).unwrap(), 2).unwrap();
        let m1 = build_compatible_metric(&b1, MetricSeed::Identity).unwrap();
        let own1 = OwnerIndex::build(b1.cover());
        let mut x1 = EndoField::zeros(b1.grid().npoints(), 2);
        for p in 0..x1.npoints() {
            x1.at_mut(p).copy_from_slice(&synth_herm(2, p, 0.0));
        }
        let _ = &own1;
        let d1 = eigenvalue_globality_defect(&b1, &m1, &x1).unwrap();
        assert!(d1 < 1e-12, "clock-shift gauge spread {d1:.3e}");

        // theta sum: nonconstant natural metric, scalar conjugations
        let g = Grid::uniform(1, 16).unwrap();
        let t1 = build_theta_bundle(&g, &[1]).unwrap();
        let t2 = build_theta_bundle(&g, &[-1]).unwrap();
        let b2 = build_direct_sum(&[&t1, &t2]).unwrap();
        let m2 = build_compatible_metric(&b2, MetricSeed::Natural).unwrap();
        let own2 = OwnerIndex::build(b2.cover());
        let mut x2 = EndoField::zeros(b2.grid().npoints(), 2);
        for p in 0..x2.npoints() {
            let gram = owner_gram(&own2, &m2, p).to_vec();
            let ginv = linalg::inverse(2, &gram).unwrap();
            x2.at_mut(p)
                .copy_from_slice(&linalg::mul(2, &ginv, &synth_herm(2, p, 0.0)));
        }
        let d2 = eigenvalue_globality_defect(&b2, &m2, &x2).unwrap();
        assert!(d2 < 1e-11, "theta gauge spread {d2:.3e}");
    }
}
