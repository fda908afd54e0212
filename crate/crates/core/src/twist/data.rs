//! Twist data (B_i, β_ij, α_ijk) on a chart cover, its validation, and the
//! canonical builders: trivial, globally-defined B-field, and the order-r
//! clock-and-shift cocycle.
//!
//! Sign conventions: β is stored for canonical pairs i<j with β_ji = −β_ij
//! derived; α is stored for i<j<k and extended to other orderings by total
//! antisymmetry (odd permutation ↦ inverse).  B_i is stored exactly like
//! curvature (raw storage, the matrix subtracted in F = ∂̄A − B·Id), so the
//! (1,1)-part of dβ entering check (a) is M[α][β] = −∂_β̄ β_α; this matches
//! the connection gluing A_i = φ⁻¹A_jφ + φ⁻¹∂φ + β_ij·Id at curvature level
//! and keeps √−1Λ_ω F_H Hermitian for Hermitian B storage.  The (2,0)-part
//! ∂_α β_γ − ∂_γ β_α must vanish for the identity to make sense and is folded
//! into the same defect.  All derivatives of overlap data are evaluated only
//! at points whose full stencil stays inside one connected component.

use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

use crate::constants::{fd_tol, ALGEBRAIC_TOL};
use crate::geometry::{Form11Field, TorusGeometry};
use crate::grid::{Grid, StencilOrder};
use crate::twist::cover::{ChartCover, Region};
use crate::{Error, Result};

/// (1,1)-form on one chart's lifted box, Ω storage, row-major over the box.
#[derive(Debug, Clone)]
pub struct ChartForm11 {
    pub chart: usize,
    pub n: usize,
    pub data: Vec<C64>,
}

impl ChartForm11 {
    pub fn zeros(cover: &ChartCover, chart: usize) -> ChartForm11 {
        let n = cover.grid.n;
        ChartForm11 {
            chart,
            n,
            data: vec![C64::new(0.0, 0.0); cover.charts[chart].box_points() * n * n],
        }
    }

    pub fn at_local(&self, local_flat: usize) -> &[C64] {
        let nn = self.n * self.n;
        &self.data[local_flat * nn..(local_flat + 1) * nn]
    }

    pub fn at_local_mut(&mut self, local_flat: usize) -> &mut [C64] {
        let nn = self.n * self.n;
        &mut self.data[local_flat * nn..(local_flat + 1) * nn]
    }
}

/// Local box index of a global point inside a chart, if covered.
pub fn box_index(cover: &ChartCover, chart: usize, coords: &[usize]) -> Option<usize> {
    let lifted = cover.lift_point(chart, coords)?;
    let ch = &cover.charts[chart];
    let local: Vec<usize> = lifted
        .iter()
        .zip(&ch.lo)
        .map(|(l, lo)| (l - lo) as usize)
        .collect();
    Some(ch.local_flat(&local))
}

/// (1,0)-form values aligned with a region's point list (n components).
#[derive(Debug, Clone)]
pub struct SparseForm10 {
    pub n: usize,
    pub values: Vec<C64>,
}

/// Scalar values aligned with a region's point list.
#[derive(Debug, Clone)]
pub struct SparseScalar {
    pub values: Vec<C64>,
}

pub(crate) fn sparse_slot(points: &[u32], p: usize) -> Option<usize> {
    points.binary_search(&(p as u32)).ok()
}

#[derive(Debug, Clone)]
pub struct PairData {
    pub pair: (usize, usize),
    pub region: Region,
    pub beta: SparseForm10,
}

#[derive(Debug, Clone)]
pub struct TripleData {
    pub triple: (usize, usize, usize),
    pub region: Region,
    pub alpha: SparseScalar,
}

#[derive(Debug, Clone)]
pub struct TwistData {
    pub cover: ChartCover,
    pub b: Vec<ChartForm11>,
    pub pairs: Vec<PairData>,
    pub triples: Vec<TripleData>,
}

impl TwistData {
    /// Skeleton with zero B and β, α ≡ 1, on every nonempty overlap.
    fn skeleton(cover: ChartCover) -> TwistData {
        let b = (0..cover.ncharts())
            .map(|c| ChartForm11::zeros(&cover, c))
            .collect();
        let n = cover.grid.n;
        let mut pairs = Vec::new();
        for (i, j) in cover.pairs() {
            let region = cover.region(&[i, j]);
            if region.is_empty() {
                continue;
            }
            let beta = SparseForm10 { n, values: vec![C64::new(0.0, 0.0); region.points.len() * n] };
            pairs.push(PairData { pair: (i, j), region, beta });
        }
        let mut triples = Vec::new();
        for (i, j, k) in cover.triples() {
            let region = cover.region(&[i, j, k]);
            if region.is_empty() {
                continue;
            }
            let alpha = SparseScalar { values: vec![C64::new(1.0, 0.0); region.points.len()] };
            triples.push(TripleData { triple: (i, j, k), region, alpha });
        }
        TwistData { cover, b, pairs, triples }
    }

    pub fn pair_data(&self, i: usize, j: usize) -> Option<&PairData> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().find(|p| p.pair == key)
    }

    pub fn triple_data(&self, i: usize, j: usize, k: usize) -> Option<&TripleData> {
        let mut key = [i, j, k];
        key.sort_unstable();
        self.triples
            .iter()
            .find(|t| t.triple == (key[0], key[1], key[2]))
    }

    /// β_ij at a global point, with the antisymmetry sign applied.
    pub fn beta_at(&self, i: usize, j: usize, p: usize) -> Option<Vec<C64>> {
        if i == j {
            return None;
        }
        let pd = self.pair_data(i, j)?;
        let slot = sparse_slot(&pd.region.points, p)?;
        let n = pd.beta.n;
        let mut v = pd.beta.values[slot * n..(slot + 1) * n].to_vec();
        if i > j {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        Some(v)
    }

    /// α_ijk at a global point, antisymmetric in the indices.
    pub fn alpha_at(&self, i: usize, j: usize, k: usize, p: usize) -> Option<C64> {
        if i == j || j == k || i == k {
            return None;
        }
        let td = self.triple_data(i, j, k)?;
        let slot = sparse_slot(&td.region.points, p)?;
        let v = td.alpha.values[slot];
        let parity_odd = {
            let perm = [i, j, k];
            let mut inversions = 0;
            for a in 0..3 {
                for b in a + 1..3 {
                    if perm[a] > perm[b] {
                        inversions += 1;
                    }
                }
            }
            inversions % 2 == 1
        };
        Some(if parity_odd { C64::new(1.0, 0.0) / v } else { v })
    }

    /// B_i at a global point (Hermitian curvature-type slice, the matrix
    /// subtracted from raw ∂̄A), if the chart covers it.
    pub fn b_at(&self, i: usize, coords: &[usize]) -> Option<&[C64]> {
        let idx = box_index(&self.cover, i, coords)?;
        Some(self.b[i].at_local(idx))
    }
}

/// Wirtinger derivatives of a scalar defined on a region, evaluated where the
/// whole stencil sits in one component.  Returns (∂_α f, ∂_ᾱ f) aligned with
/// `region.points`; None where the stencil leaves the component.
pub(crate) fn region_wirtinger(
    grid: &Grid,
    region: &Region,
    get: &dyn Fn(usize) -> C64,
    alpha: usize,
    order: StencilOrder,
) -> (Vec<Option<C64>>, Vec<Option<C64>>) {
    let (ax, ay) = (2 * alpha, 2 * alpha + 1);
    let mut holo = Vec::with_capacity(region.points.len());
    let mut anti = Vec::with_capacity(region.points.len());
    for &p32 in &region.points {
        let p = p32 as usize;
        let comp = region.comp_id[p];
        let mut ok = true;
        let mut dx = C64::new(0.0, 0.0);
        let mut dy = C64::new(0.0, 0.0);
        for &(off, w) in order.d1() {
            let qx = grid.shift(p, ax, off);
            let qy = grid.shift(p, ay, off);
            if region.comp_id[qx] != comp || region.comp_id[qy] != comp {
                ok = false;
                break;
            }
            dx += get(qx) * w;
            dy += get(qy) * w;
        }
        if ok {
            dx /= grid.spacing[ax];
            dy /= grid.spacing[ay];
            let i = C64::new(0.0, 1.0);
            holo.push(Some(0.5 * (dx - i * dy)));
            anti.push(Some(0.5 * (dx + i * dy)));
        } else {
            holo.push(None);
            anti.push(None);
        }
    }
    (holo, anti)
}

#[derive(Debug, Clone, Copy)]
pub struct TwistTolerances {
    pub algebraic: f64,
    pub differential: f64,
}

impl TwistTolerances {
    pub fn for_grid(grid: &Grid) -> TwistTolerances {
        TwistTolerances { algebraic: ALGEBRAIC_TOL, differential: fd_tol(grid.max_spacing()) }
    }
}

#[derive(Debug, Clone)]
pub struct TwistReport {
    /// (a) sup |B_i − B_j − dβ_ij| per pair.
    pub b_vs_dbeta: Vec<((usize, usize), f64)>,
    /// (b) sup |β_ij + β_jk + β_ki + α⁻¹∂α| per triple.
    pub beta_cocycle: Vec<((usize, usize, usize), f64)>,
    /// (c) sup |δα − 1| per quadruple.
    pub alpha_cocycle: Vec<((usize, usize, usize, usize), f64)>,
    /// (d) sup ||α| − 1| per triple.
    pub alpha_modulus: Vec<((usize, usize, usize), f64)>,
    pub tol: TwistTolerances,
    pub pass: bool,
}

impl TwistReport {
    pub fn max_differential_defect(&self) -> f64 {
        self.b_vs_dbeta
            .iter()
            .map(|e| e.1)
            .chain(self.beta_cocycle.iter().map(|e| e.1))
            .fold(0.0, f64::max)
    }

    pub fn max_algebraic_defect(&self) -> f64 {
        self.alpha_cocycle
            .iter()
            .map(|e| e.1)
            .chain(self.alpha_modulus.iter().map(|e| e.1))
            .fold(0.0, f64::max)
    }
}

/// Čech validation of twist data: see `TwistReport` for the four checks.
pub fn validate_twist(
    twist: &TwistData,
    geo: &TorusGeometry,
    tol: Option<TwistTolerances>,
) -> Result<TwistReport> {
    let cover = &twist.cover;
    let grid = &cover.grid;
    if geo.grid.dims != grid.dims {
        return Err(Error::ShapeMismatch("twist cover grid vs geometry grid".into()));
    }
    let tol = tol.unwrap_or_else(|| TwistTolerances::for_grid(grid));
    let order = grid.stencil_order();
    let n = grid.n;

    // (a) B_i − B_j − dβ_ij on each pair overlap
    let mut b_vs_dbeta = Vec::new();
    for pd in &twist.pairs {
        let (i, j) = pd.pair;
        let mut sup = 0.0f64;
        // derivative fields of each β component
        let comp_get = |c: usize| {
            let values = &pd.beta.values;
            let points = &pd.region.points;
            move |p: usize| {
                let slot = sparse_slot(points, p).expect("stencil point in region");
                values[slot * n + c]
            }
        };
        // holo[b][a], anti[b][a]: ∂_b / ∂_b̄ of β_a
        let mut holo = vec![Vec::new(); n * n];
        let mut anti = vec![Vec::new(); n * n];
        for a in 0..n {
            let get = comp_get(a);
            for b in 0..n {
                let (h, t) = region_wirtinger(grid, &pd.region, &get, b, order);
                holo[b * n + a] = h;
                anti[b * n + a] = t;
            }
        }
        for (slot, &p32) in pd.region.points.iter().enumerate() {
            let p = p32 as usize;
            let coords = grid.coords(p);
            let (bi, bj) = match (twist.b_at(i, &coords), twist.b_at(j, &coords)) {
                (Some(x), Some(y)) => (x, y),
                _ => continue,
            };
            for a in 0..n {
                for bb in 0..n {
                    // (1,1)-part: M_dβ[a][bb] = −∂_b̄β_a
                    if let Some(d) = anti[bb * n + a][slot] {
                        let defect = bi[a * n + bb] - bj[a * n + bb] + d;
                        sup = sup.max(defect.norm());
                    }
                    // (2,0)-part must vanish: ∂_a β_bb − ∂_bb β_a
                    if a < bb {
                        if let (Some(x), Some(y)) = (holo[a * n + bb][slot], holo[bb * n + a][slot])
                        {
                            sup = sup.max((x - y).norm());
                        }
                    }
                }
            }
        }
        b_vs_dbeta.push(((i, j), sup));
    }

    // (b) β_ij + β_jk + β_ki + α⁻¹∂α on each triple overlap
    let mut beta_cocycle = Vec::new();
    for td in &twist.triples {
        let (i, j, k) = td.triple;
        let get = |p: usize| {
            let slot = sparse_slot(&td.region.points, p).expect("stencil point in region");
            td.alpha.values[slot]
        };
        let mut dalpha = Vec::new();
        for a in 0..n {
            let (h, _) = region_wirtinger(grid, &td.region, &get, a, order);
            dalpha.push(h);
        }
        let mut sup = 0.0f64;
        for (slot, &p32) in td.region.points.iter().enumerate() {
            let p = p32 as usize;
            let (bij, bjk, bki) = match (
                twist.beta_at(i, j, p),
                twist.beta_at(j, k, p),
                twist.beta_at(k, i, p),
            ) {
                (Some(x), Some(y), Some(z)) => (x, y, z),
                _ => continue,
            };
            let alpha = td.alpha.values[slot];
            for a in 0..n {
                if let Some(da) = dalpha[a][slot] {
                    let v = bij[a] + bjk[a] + bki[a] + da / alpha;
                    sup = sup.max(v.norm());
                }
            }
        }
        beta_cocycle.push(((i, j, k), sup));
    }

    // (c) δα on quadruple overlaps
    let mut alpha_cocycle = Vec::new();
    for (i, j, k, l) in cover.quadruples() {
        let region = cover.region(&[i, j, k, l]);
        if region.is_empty() {
            continue;
        }
        let mut sup = 0.0f64;
        for &p32 in &region.points {
            let p = p32 as usize;
            let (a_jkl, a_ikl, a_ijl, a_ijk) = match (
                twist.alpha_at(j, k, l, p),
                twist.alpha_at(i, k, l, p),
                twist.alpha_at(i, j, l, p),
                twist.alpha_at(i, j, k, p),
            ) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => continue,
            };
            let delta = a_jkl / a_ikl * a_ijl / a_ijk;
            sup = sup.max((delta - C64::new(1.0, 0.0)).norm());
        }
        alpha_cocycle.push(((i, j, k, l), sup));
    }

    // (d) |α| = 1
    let mut alpha_modulus = Vec::new();
    for td in &twist.triples {
        let sup = td
            .alpha
            .values
            .iter()
            .map(|v| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        alpha_modulus.push((td.triple, sup));
    }

    let pass = b_vs_dbeta.iter().all(|e| e.1 <= tol.differential)
        && beta_cocycle.iter().all(|e| e.1 <= tol.differential)
        && alpha_cocycle.iter().all(|e| e.1 <= tol.algebraic)
        && alpha_modulus.iter().all(|e| e.1 <= tol.algebraic);

    Ok(TwistReport { b_vs_dbeta, beta_cocycle, alpha_cocycle, alpha_modulus, tol, pass })
}

pub fn build_trivial_twist(cover: &ChartCover) -> TwistData {
    TwistData::skeleton(cover.clone())
}

/// All charts carry the same global (1,1)-form; β = 0, α = 1.
pub fn build_global_b(cover: &ChartCover, form: &Form11Field) -> Result<TwistData> {
    let grid = &cover.grid;
    if form.n != grid.n || form.npoints() != grid.npoints() {
        return Err(Error::ShapeMismatch("global B-field shape".into()));
    }
    let scale = form
        .data
        .iter()
        .map(|v| v.norm())
        .fold(1.0, f64::max);
    if form.realness_defect() > ALGEBRAIC_TOL * scale {
        return Err(Error::Config(
            "global B-field must be a real (1,1)-form (Hermitian Ω storage)".into(),
        ));
    }
    let mut twist = TwistData::skeleton(cover.clone());
    let n = grid.n;
    for chart in 0..cover.ncharts() {
        let ch = cover.charts[chart].clone();
        let mut local = vec![0usize; grid.dims.len()];
        for idx in 0..ch.box_points() {
            // unflatten the box index
            let mut rem = idx;
            for a in (0..grid.dims.len()).rev() {
                local[a] = rem % ch.len[a];
                rem /= ch.len[a];
            }
            let coords: Vec<usize> = local
                .iter()
                .enumerate()
                .map(|(a, &c)| {
                    (ch.lo[a] + c as isize).rem_euclid(grid.dims[a] as isize) as usize
                })
                .collect();
            let p = grid.flat(&coords);
            twist.b[chart].data[idx * n * n..(idx + 1) * n * n]
                .copy_from_slice(form.at(p));
        }
    }
    Ok(twist)
}

/// Symbolic element ζ^c·C^m·S^k of the clock-and-shift group, ζ = e^{2πi/r}.
/// Composition uses S^k C^m = ζ^{−km} C^m S^k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ClockWord {
    pub r: i64,
    pub c: i64,
    pub m: i64,
    pub k: i64,
}

impl ClockWord {
    pub fn identity(r: i64) -> ClockWord {
        ClockWord { r, c: 0, m: 0, k: 0 }
    }

    pub fn clock(r: i64) -> ClockWord {
        ClockWord { r, c: 0, m: 1, k: 0 }
    }

    pub fn shift(r: i64) -> ClockWord {
        ClockWord { r, c: 0, m: 0, k: 1 }
    }

    pub fn mul(self, o: ClockWord) -> ClockWord {
        debug_assert_eq!(self.r, o.r);
        ClockWord {
            r: self.r,
            c: (self.c + o.c - self.k * o.m).rem_euclid(self.r),
            m: self.m + o.m,
            k: self.k + o.k,
        }
    }

    pub fn inv(self) -> ClockWord {
        ClockWord {
            r: self.r,
            c: (-self.c - self.k * self.m).rem_euclid(self.r),
            m: -self.m,
            k: -self.k,
        }
    }

    pub fn phase(self) -> C64 {
        C64::new(0.0, TAU * self.c as f64 / self.r as f64).exp()
    }
}

/// Symbolic transition word for the clock-shift multiplier system: the deck
/// shift γ (chart a relative to chart b) is turned into the axis-ordered
/// product of generators, x-axis ↦ clock, y-axis ↦ shift.
pub(crate) fn clock_transition_word(
    cover: &ChartCover,
    r: i64,
    a: usize,
    b: usize,
    coords: &[usize],
) -> Option<ClockWord> {
    if a == b {
        return Some(ClockWord::identity(r));
    }
    let (lo, hi, invert) = if a < b { (a, b, false) } else { (b, a, true) };
    let gamma = cover.gamma(lo, hi, coords)?;
    let mut w = ClockWord::identity(r);
    for (axis_pos, &axis) in cover.sub_axes.iter().enumerate() {
        let g = gamma[axis];
        if g == 0 {
            continue;
        }
        let gen = if axis_pos == 0 { ClockWord::clock(r) } else { ClockWord::shift(r) };
        let step = if g > 0 { gen } else { gen.inv() };
        for _ in 0..g.unsigned_abs() {
            w = w.mul(step);
        }
    }
    Some(if invert { w.inv() } else { w })
}

/// Order-r clock-and-shift twist on a four-chart cover subdividing both real
/// axes of one complex coordinate.  B = 0, β = 0; α_ijk is the scalar part of
/// the symbolic triple product φ_ki φ_jk φ_ij and is locally constant with
/// values in the r-th roots of unity.
pub fn build_clock_shift_twist(cover: &ChartCover, r: usize) -> Result<TwistData> {
    if r == 0 {
        return Err(Error::Config("clock-shift order must be ≥ 1".into()));
    }
    let axes_ok = cover.sub_axes.len() == 2
        && cover.sub_axes[0] % 2 == 0
        && cover.sub_axes[1] == cover.sub_axes[0] + 1;
    if !axes_ok {
        return Err(Error::Config(format!(
            "clock-shift twist needs a four-chart cover subdividing both real axes \
             of one complex coordinate; got subdivided axes {:?}",
            cover.sub_axes
        )));
    }
    let mut twist = TwistData::skeleton(cover.clone());
    if r == 1 {
        return Ok(twist);
    }
    let grid = twist.cover.grid.clone();
    let rr = r as i64;
    for td in twist.triples.iter_mut() {
        let (i, j, k) = td.triple;
        for (slot, &p32) in td.region.points.iter().enumerate() {
            let coords = grid.coords(p32 as usize);
            let w_ki = clock_transition_word(&twist.cover, rr, k, i, &coords).unwrap();
            let w_jk = clock_transition_word(&twist.cover, rr, j, k, &coords).unwrap();
            let w_ij = clock_transition_word(&twist.cover, rr, i, j, &coords).unwrap();
            let t = w_ki.mul(w_jk).mul(w_ij);
            debug_assert!(t.m == 0 && t.k == 0, "cocycle word must close");
            td.alpha.values[slot] = t.phase();
        }
    }
    Ok(twist)
}

/// Exhaustive search for a locally-constant 1-cochain μ with values in the
/// r-th roots of unity and δμ = α.  Returns the exponent assignment per
/// (pair, component) slot if one exists; `None` means the class of α is
/// nontrivial at level r.  Requires α locally constant.
pub fn coboundary_search(twist: &TwistData, r: usize) -> Result<Option<Vec<i64>>> {
    let rr = r as i64;
    // slots: one exponent per (pair, component)
    let mut slot_base = Vec::new();
    let mut nslots = 0usize;
    for pd in &twist.pairs {
        slot_base.push(nslots);
        nslots += pd.region.ncomp;
    }
    let total = (r as f64).powi(nslots as i32);
    if total > (1u64 << 26) as f64 {
        return Err(Error::IterationLimit(format!(
            "coboundary search space r^slots = {r}^{nslots} too large"
        )));
    }
    let pair_index = |a: usize, b: usize| -> usize {
        twist
            .pairs
            .iter()
            .position(|pd| pd.pair == (a.min(b), a.max(b)))
            .expect("pair present")
    };
    // equations: per triple component, δμ exponent must equal α exponent
    struct Eq {
        // (slot, sign) for μ_jk, μ_ik⁻¹, μ_ij
        terms: [(usize, i64); 3],
        rhs: i64,
    }
    let grid = &twist.cover.grid;
    let mut eqs = Vec::new();
    for td in &twist.triples {
        let (i, j, k) = td.triple;
        let mut seen = vec![false; td.region.ncomp];
        for (slot, &p32) in td.region.points.iter().enumerate() {
            let p = p32 as usize;
            let comp = td.region.component(p).unwrap();
            let v = td.alpha.values[slot];
            // exponent of α as an r-th root of unity
            let ex = (v.arg() / TAU * rr as f64).round() as i64;
            let ex = ex.rem_euclid(rr);
            let back = C64::new(0.0, TAU * ex as f64 / rr as f64).exp();
            if (v - back).norm() > 1e-9 {
                return Err(Error::Config(format!(
                    "α value {v} is not an order-{r} root of unity"
                )));
            }
            if seen[comp] {
                // locally constant check: same exponent as representative
                continue;
            }
            seen[comp] = true;
            let coords = grid.coords(p);
            let term = |a: usize, b: usize, sign: i64| -> (usize, i64) {
                let pi = pair_index(a, b);
                let pd = &twist.pairs[pi];
                let pcomp = pd.region.component(p).unwrap_or_else(|| {
                    panic!("triple point {coords:?} missing from pair {:?}", pd.pair)
                });
                (slot_base[pi] + pcomp, sign)
            };
            eqs.push(Eq {
                terms: [term(j, k, 1), term(i, k, -1), term(i, j, 1)],
                rhs: ex,
            });
        }
        // verify local constancy across every point of each component
        let mut rep_ex: Vec<Option<i64>> = vec![None; td.region.ncomp];
        for (slot, &p32) in td.region.points.iter().enumerate() {
            let comp = td.region.component(p32 as usize).unwrap();
            let ex = (td.alpha.values[slot].arg() / TAU * rr as f64).round() as i64;
            let ex = ex.rem_euclid(rr);
            match rep_ex[comp] {
                None => rep_ex[comp] = Some(ex),
                Some(e) => {
                    if e != ex {
                        return Err(Error::Config(
                            "coboundary search needs locally-constant α".into(),
                        ));
                    }
                }
            }
        }
    }
    // mixed-radix exhaustive scan
    let mut assign = vec![0i64; nslots];
    loop {
        let ok = eqs.iter().all(|eq| {
            let mut s = 0i64;
            for (slot, sign) in eq.terms {
                s += sign * assign[slot];
            }
            s.rem_euclid(rr) == eq.rhs
        });
        if ok {
            return Ok(Some(assign));
        }
        // increment
        let mut carry = 0usize;
        loop {
            if carry == nslots {
                return Ok(None);
            }
            assign[carry] += 1;
            if assign[carry] < rr {
                break;
            }
            assign[carry] = 0;
            carry += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn geo32() -> TorusGeometry {
        TorusGeometry::flat(Grid::uniform(1, 32).unwrap())
    }

    fn quad_cover() -> ChartCover {
        ChartCover::quad(Grid::uniform(1, 32).unwrap(), 0, 1, 6).unwrap()
    }

    #[test]
    fn trivial_twist_validates_exactly() {
        let cover = quad_cover();
        let twist = build_trivial_twist(&cover);
        let rep = validate_twist(&twist, &geo32(), None).unwrap();
        assert!(rep.pass);
        // stencil weights leave ~1e−16 summation residue on constant data
        assert!(rep.max_differential_defect() < 1e-14);
        assert_eq!(rep.max_algebraic_defect(), 0.0);
    }

    #[test]
    fn global_b_with_multiple_of_omega() {
        let geo = geo32();
        let cover = ChartCover::bands(geo.grid.clone(), 1, 6).unwrap();
        let mut form = geo.omega();
        for v in form.data.iter_mut() {
            *v *= 2.5;
        }
        let twist = build_global_b(&cover, &form).unwrap();
        let rep = validate_twist(&twist, &geo, None).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.max_differential_defect(), 0.0);
    }

    #[test]
    fn global_b_rejects_non_real_form() {
        let geo = geo32();
        let cover = ChartCover::bands(geo.grid.clone(), 1, 6).unwrap();
        let mut form = geo.omega();
        form.data[3] += C64::new(0.0, 0.5); // break Hermiticity at one point
        assert!(matches!(build_global_b(&cover, &form), Err(Error::Config(_))));
    }

    #[test]
    fn injected_alpha_fault_fails_modulus_check() {
        let cover = quad_cover();
        let mut twist = build_trivial_twist(&cover);
        twist.triples[0].alpha.values[0] = C64::new(1.0 + 1e-3, 0.0);
        let rep = validate_twist(&twist, &geo32(), None).unwrap();
        assert!(!rep.pass);
        let worst = rep.alpha_modulus.iter().map(|e| e.1).fold(0.0, f64::max);
        assert!((worst - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn clock_shift_r2_validates_and_is_nontrivial() {
        let cover = quad_cover();
        let twist = build_clock_shift_twist(&cover, 2).unwrap();
        let rep = validate_twist(&twist, &geo32(), None).unwrap();
        assert!(rep.pass, "{rep:?}");
        // α is ±1 and not identically 1
        let mut saw_nontrivial = false;
        for td in &twist.triples {
            for v in &td.alpha.values {
                assert!(
                    (v - C64::new(1.0, 0.0)).norm() < 1e-12
                        || (v + C64::new(1.0, 0.0)).norm() < 1e-12
                );
                if (v + C64::new(1.0, 0.0)).norm() < 1e-12 {
                    saw_nontrivial = true;
                }
            }
        }
        assert!(saw_nontrivial);
        // no constant μ₂-valued 1-cochain cobounds α
        assert!(coboundary_search(&twist, 2).unwrap().is_none());
    }

    #[test]
    fn trivial_twist_cobounds() {
        let cover = quad_cover();
        let twist = build_trivial_twist(&cover);
        let found = coboundary_search(&twist, 2).unwrap();
        assert_eq!(found, Some(vec![0; 16]));
    }

    #[test]
    fn clock_shift_r3_cocycle_closes() {
        let cover = quad_cover();
        let twist = build_clock_shift_twist(&cover, 3).unwrap();
        let rep = validate_twist(&twist, &geo32(), None).unwrap();
        assert!(rep.pass);
        // all values are cube roots of unity
        for td in &twist.triples {
            for v in &td.alpha.values {
                assert!((v.powi(3) - C64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
        // δα = 1 exactly on the quadruple overlap
        let worst = rep.alpha_cocycle.iter().map(|e| e.1).fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn clock_shift_r1_is_trivial() {
        let cover = quad_cover();
        let twist = build_clock_shift_twist(&cover, 1).unwrap();
        for td in &twist.triples {
            for v in &td.alpha.values {
                assert_eq!(*v, C64::new(1.0, 0.0));
            }
        }
    }

    #[test]
    fn clock_shift_rejects_band_cover() {
        let cover = ChartCover::bands(Grid::uniform(1, 32).unwrap(), 1, 6).unwrap();
        assert!(matches!(
            build_clock_shift_twist(&cover, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn beta_accessor_is_antisymmetric() {
        let cover = quad_cover();
        let mut twist = build_trivial_twist(&cover);
        // give pair (0,1) some values
        let pd = &mut twist.pairs[0];
        for v in pd.beta.values.iter_mut() {
            *v = C64::new(0.7, -0.2);
        }
        let p = twist.pairs[0].region.points[0] as usize;
        let b01 = twist.beta_at(0, 1, p).unwrap();
        let b10 = twist.beta_at(1, 0, p).unwrap();
        assert_eq!(b01[0], -b10[0]);
    }

    /// Manufactured smooth twist exercising the differential checks (a), (b)
    /// with nonzero β, B and varying α against closed-form derivatives.
    #[test]
    fn manufactured_twist_passes_differential_checks() {
        let geo = geo32();
        let grid = geo.grid.clone();
        let cover = quad_cover();
        let mut twist = build_trivial_twist(&cover);
        let tau = TAU;
        let g_fun = |x: f64, y: f64| (tau * x).sin() * (tau * y).cos();
        // ∂g = (gx − i·gy)/2 and ∂∂̄g = Δg/4 for n = 1
        let dg = |x: f64, y: f64| {
            let gx = tau * (tau * x).cos() * (tau * y).cos();
            let gy = -tau * (tau * x).sin() * (tau * y).sin();
            0.5 * C64::new(gx, -gy)
        };
        let lap_quarter = |x: f64, y: f64| -0.5 * tau * tau * g_fun(x, y);
        // B_i = −t_i·Δg/4 (raw storage), β_ij = (t_i − t_j)·∂g satisfy
        // B_i − B_j = −∂̄β_ij entrywise
        let t = [3.0, 2.0, 1.0, 0.0];
        for chart in 0..4 {
            let ch = cover.charts[chart].clone();
            for idx in 0..ch.box_points() {
                let mut rem = idx;
                let mut local = [0usize; 2];
                for a in (0..2).rev() {
                    local[a] = rem % ch.len[a];
                    rem /= ch.len[a];
                }
                let x = (ch.lo[0] + local[0] as isize) as f64 * grid.spacing[0];
                let y = (ch.lo[1] + local[1] as isize) as f64 * grid.spacing[1];
                twist.b[chart].data[idx] =
                    C64::new(-t[chart] * lap_quarter(x, y), 0.0);
            }
        }
        for pd in twist.pairs.iter_mut() {
            let (i, j) = pd.pair;
            for (slot, &p32) in pd.region.points.iter().enumerate() {
                let c = grid.coords(p32 as usize);
                let (x, y) = (grid.coord_value(0, c[0]), grid.coord_value(1, c[1]));
                pd.beta.values[slot] = (t[i] - t[j]) * dg(x, y);
            }
        }
        // α = e^{2πi x} on triples containing pair (1,2).  The phase is
        // pluriharmonic, so ∂logα = iπ is constant and dβ is untouched;
        // β_12 −= α⁻¹∂α = iπ restores check (b) on those triples.
        for td in twist.triples.iter_mut() {
            let (i, j, k) = td.triple;
            let has12 = (i, j) == (1, 2) || (j, k) == (1, 2);
            if !has12 {
                continue;
            }
            for (slot, &p32) in td.region.points.iter().enumerate() {
                let c = grid.coords(p32 as usize);
                let x = grid.coord_value(0, c[0]);
                td.alpha.values[slot] = C64::new(0.0, tau * x).exp();
            }
        }
        for pd in twist.pairs.iter_mut() {
            if pd.pair != (1, 2) {
                continue;
            }
            for v in pd.beta.values.iter_mut() {
                *v -= C64::new(0.0, std::f64::consts::PI);
            }
        }
        let rep = validate_twist(&twist, &geo, None).unwrap();
        assert!(rep.pass, "defects: {rep:?}");
        assert!(rep.max_differential_defect() > 0.0); // genuinely exercised
    }
}
