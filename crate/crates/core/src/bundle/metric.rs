//! Hermitian metrics as per-chart Gram fields glued by a partition of unity.
//!
//! A metric assigns a positive Gram matrix G_c to every point of every chart
//! box, with G_j = φ_ij†·G_i·φ_ij on overlaps.  Gluing arbitrary positive
//! seeds S_k through G_c(p) = Σ_k ρ_k(p)·φ_kc(p)†·S_k(ℓ_k(p))·φ_kc(p) yields
//! compatibility exact to rounding: the cocycle defect α is unimodular and
//! cancels inside the conjugations.

use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

use crate::bundle::transition::{Block, TwistedBundle};
use crate::constants::POSITIVITY_FLOOR;
use crate::linalg;
use crate::twist::{box_index, ChartCover};
use crate::{Error, Result};

/// Positive Hermitian Gram field, one row-major r×r matrix per chart box
/// point, box-major within each chart.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub r: usize,
    pub charts: Vec<Vec<C64>>,
}

impl MetricField {
    pub fn identity(cover: &ChartCover, r: usize) -> MetricField {
        let id = linalg::identity(r);
        let charts = cover
            .charts
            .iter()
            .map(|ch| {
                let mut v = Vec::with_capacity(ch.box_points() * r * r);
                for _ in 0..ch.box_points() {
                    v.extend_from_slice(&id);
                }
                v
            })
            .collect();
        MetricField { r, charts }
    }

    pub fn gram(&self, chart: usize, b: usize) -> &[C64] {
        let rr = self.r * self.r;
        &self.charts[chart][b * rr..(b + 1) * rr]
    }

    pub fn gram_mut(&mut self, chart: usize, b: usize) -> &mut [C64] {
        let rr = self.r * self.r;
        &mut self.charts[chart][b * rr..(b + 1) * rr]
    }

    /// Smallest eigenvalue over every chart box point.
    pub fn min_eigenvalue(&self) -> f64 {
        let mut min = f64::INFINITY;
        for ch in &self.charts {
            for g in ch.chunks(self.r * self.r) {
                let (vals, _) = linalg::herm_eig(self.r, g);
                min = min.min(vals[0]);
            }
        }
        min
    }

    /// Uniform conformal rescale G ↦ t·G.
    pub fn scale(&mut self, t: f64) {
        for ch in &mut self.charts {
            for v in ch.iter_mut() {
                *v *= t;
            }
        }
    }
}

/// Seed Gram fields fed to the partition-of-unity gluing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSeed {
    Identity,
    /// Identity on trivial and clock-shift blocks; on a theta block the
    /// multiplier-compatible profile Π_α e^{−2π d_α (ỹ_α²/P_α − ỹ_α)} at the
    /// chart's own lift.  Already compatible, so the gluing fixes it.
    Natural,
}

/// Seed Gram at one lifted box point, block-diagonal over the bundle blocks.
fn seed_gram(bundle: &TwistedBundle, seed: MetricSeed, lift: &[isize]) -> Vec<C64> {
    let r = bundle.rank;
    let mut out = linalg::identity(r);
    if seed == MetricSeed::Identity {
        return out;
    }
    let grid = bundle.grid();
    let mut off = 0usize;
    for b in &bundle.blocks {
        if let Block::Theta { windings } = b {
            let mut h = 1.0f64;
            for (alpha, &d) in windings.iter().enumerate() {
                if d == 0 {
                    continue;
                }
                let axis = 2 * alpha + 1;
                let y = lift[axis] as f64 * grid.spacing[axis];
                let p = grid.periods[axis];
                h *= (-TAU * d as f64 * (y * y / p - y)).exp();
            }
            out[off * r + off] = C64::new(h, 0.0);
        }
        off += b.rank();
    }
    out
}

/// C^∞ ramp, identically 0 below 0 and 1 above 1, with flat contact.
fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let g = |u: f64| (-1.0 / u).exp();
        g(t) / (g(t) + g(1.0 - t))
    }
}

/// Weight along one subdivided axis as a function of the box-relative index:
/// ramps over the leading 2w points, 1 on the arc interior, ramps down over
/// the trailing 2w points.  Opposite arcs sum to 1 everywhere.
fn arc_weight(n: usize, w: usize, rel: usize) -> f64 {
    let span = (2 * w) as f64;
    if rel < 2 * w {
        ramp(rel as f64 / span)
    } else if rel >= n / 2 {
        ramp(1.0 - (rel - n / 2) as f64 / span)
    } else {
        1.0
    }
}

/// ρ_c at a torus point: product of arc weights over the subdivided axes,
/// zero outside the chart box.  Σ_c ρ_c = 1.
pub fn chart_weight(cover: &ChartCover, c: usize, coords: &[usize]) -> f64 {
    let chart = &cover.charts[c];
    let mut w = 1.0f64;
    for &axis in &cover.sub_axes {
        match cover.lift(c, axis, coords[axis]) {
            Some(l) => {
                let rel = (l - chart.lo[axis]) as usize;
                w *= arc_weight(cover.grid.dims[axis], cover.halfwidth, rel);
            }
            None => return 0.0,
        }
    }
    w
}

/// Glue seed Grams into a compatible positive metric.
pub fn build_compatible_metric(
    bundle: &TwistedBundle,
    seed: MetricSeed,
) -> Result<MetricField> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let r = bundle.rank;
    let rr = r * r;
    let mut charts = Vec::with_capacity(cover.ncharts());
    for (c, chart) in cover.charts.iter().enumerate() {
        let mut field = vec![C64::new(0.0, 0.0); chart.box_points() * rr];
        for b in 0..chart.box_points() {
            let coords = chart.torus_coords(&grid.dims, b);
            let p = grid.flat(&coords);
            let gram = &mut field[b * rr..(b + 1) * rr];
            for k in 0..cover.ncharts() {
                let rho = chart_weight(cover, k, &coords);
                if rho == 0.0 {
                    continue;
                }
                let lift_k = cover.lift_point(k, &coords).expect("weighted point in chart");
                let s = seed_gram(bundle, seed, &lift_k);
                if k == c {
                    linalg::axpy(C64::new(rho, 0.0), &s, gram);
                } else {
                    let phi = bundle
                        .transition(k, c, p)
                        .expect("shared point lies in the pair region");
                    let t = linalg::mul3(r, &linalg::adjoint(r, &phi), &s, &phi);
                    linalg::axpy(C64::new(rho, 0.0), &t, gram);
                }
            }
            let h = linalg::herm_part(r, gram);
            gram.copy_from_slice(&h);
        }
        charts.push(field);
    }
    let metric = MetricField { r, charts };
    let floor = metric.min_eigenvalue();
    if !(floor > POSITIVITY_FLOOR) {
        return Err(Error::PositivityFloor {
            floor: POSITIVITY_FLOOR,
            context: format!("glued metric has min eigenvalue {floor:.3e}"),
        });
    }
    Ok(metric)
}

/// sup |G_j − φ_ij†·G_i·φ_ij| over every overlap point of every pair.
pub fn compatibility_defect(bundle: &TwistedBundle, metric: &MetricField) -> f64 {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let r = metric.r;
    let mut sup = 0.0f64;
    for pd in &bundle.twist.pairs {
        let (i, j) = pd.pair;
        for &p32 in &pd.region.points {
            let p = p32 as usize;
            let coords = grid.coords(p);
            let phi = bundle.transition(i, j, p).expect("pair region point");
            let bi = box_index(cover, i, &coords).expect("pair point in chart i");
            let bj = box_index(cover, j, &coords).expect("pair point in chart j");
            let t = linalg::mul3(r, &linalg::adjoint(r, &phi), metric.gram(i, bi), &phi);
            for (a, b) in metric.gram(j, bj).iter().zip(&t) {
                sup = sup.max((a - b).norm());
            }
        }
    }
    sup
}
