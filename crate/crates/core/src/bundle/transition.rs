//! Multiplier systems (factors of automorphy), materialized transitions, and
//! bundle builders with validation.
//!
//! A bundle is presented by per-axis multipliers E_t with s(x+e_t) = E_t(x)·s(x)
//! in lifted unit coordinates.  The transition of the chart pair (i,j) is the
//! path-ordered multiplier product along the deck shift γ(i,j), evaluated at
//! chart j's lift: φ_ij(p) = Φ_γ(ℓ_j(p)), axes processed in ascending order.
//! Non-commuting multipliers make Φ path-dependent (that failure is the twist
//! α), so only φ_ij with i<j is taken from the path product; φ_ji := φ_ij⁻¹
//! keeps the inverse identity exact.

use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

use crate::constants::{fd_tol, ALGEBRAIC_TOL};
use crate::grid::Grid;
use crate::linalg;
use crate::twist::{
    clock_transition_word, region_wirtinger, sparse_slot, ChartCover, TwistData,
};
use crate::twist::{build_clock_shift_twist, build_trivial_twist};
use crate::{Error, Result};

/// One diagonal block of the multiplier system.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// Trivial multipliers on `rank` components.
    Trivial { rank: usize },
    /// Order-r clock-and-shift pair on the real axes (2α, 2α+1):
    /// E_{2α} = C = diag(ζ^t), E_{2α+1} = S with S[t][(t−1) mod r] = 1, so
    /// CS = ζ·SC, ζ = e^{2πi/r}.
    ClockShift { order: usize, alpha: usize },
    /// Rank-one theta factor with one winding per complex coordinate:
    /// E_{2α+1}(x) = e^{−2πi·d_α·z_α}, all other multipliers 1.
    Theta { windings: Vec<i64> },
}

impl Block {
    pub fn rank(&self) -> usize {
        match self {
            Block::Trivial { rank } => *rank,
            Block::ClockShift { order, .. } => *order,
            Block::Theta { .. } => 1,
        }
    }
}

/// ζ^c·C^m·S^k as a concrete monomial matrix: M[t][(t−k) mod r] = ζ^{c+t·m}.
fn clock_matrix(r: usize, c: i64, m: i64, k: i64) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); r * r];
    for t in 0..r {
        let col = ((t as i64 - k).rem_euclid(r as i64)) as usize;
        let e = (c + t as i64 * m).rem_euclid(r as i64);
        out[t * r + col] = C64::new(0.0, TAU * e as f64 / r as f64).exp();
    }
    out
}

/// Path-ordered scalar factor of a theta block for deck shift γ, starting at
/// lifted grid point `lift` (chart j's lift, grid units).  Axes are folded in
/// descending order so the running point matches the ascending matrix order
/// (rightmost factor acts first).
fn theta_factor(windings: &[i64], grid: &Grid, gamma: &[i32], lift: &[isize]) -> C64 {
    let mut pos: Vec<f64> = lift
        .iter()
        .enumerate()
        .map(|(t, &l)| l as f64 * grid.spacing[t])
        .collect();
    let mut exponent = C64::new(0.0, 0.0);
    for t in (0..gamma.len()).rev() {
        let g = gamma[t];
        if g == 0 {
            continue;
        }
        let period = grid.periods[t];
        if t % 2 == 1 {
            let alpha = t / 2;
            let d = windings[alpha] as f64;
            if d != 0.0 {
                // log E_t(y) = −2πi·d·z_α(y)
                for s in 0..g.unsigned_abs() {
                    let zx = pos[2 * alpha];
                    let (zy, sign) = if g > 0 {
                        (pos[t] + s as f64 * period, -1.0)
                    } else {
                        (pos[t] - (s + 1) as f64 * period, 1.0)
                    };
                    exponent += sign * TAU * d * C64::new(0.0, 1.0) * C64::new(zx, zy);
                }
            }
        }
        pos[t] += g as f64 * period;
    }
    exponent.exp()
}

/// Transition value of one block for the canonical ordered pair (i<j).
fn block_phi(
    block: &Block,
    cover: &ChartCover,
    i: usize,
    j: usize,
    coords: &[usize],
) -> Vec<C64> {
    match block {
        Block::Trivial { rank } => linalg::identity(*rank),
        Block::ClockShift { order, .. } => {
            let w = clock_transition_word(cover, *order as i64, i, j, coords)
                .expect("overlap point");
            clock_matrix(*order, w.c, w.m, w.k)
        }
        Block::Theta { windings } => {
            let gamma = cover.gamma(i, j, coords).expect("overlap point");
            let lift = cover.lift_point(j, coords).expect("overlap point");
            vec![theta_factor(windings, &cover.grid, &gamma, &lift)]
        }
    }
}

/// Exact block inverse: monomial clock matrices are unitary, theta blocks are
/// scalars.
fn block_inv(block: &Block, phi: &[C64]) -> Vec<C64> {
    match block {
        Block::Trivial { rank } => linalg::identity(*rank),
        Block::ClockShift { order, .. } => linalg::adjoint(*order, phi),
        Block::Theta { .. } => vec![C64::new(1.0, 0.0) / phi[0]],
    }
}

/// Materialized transitions of one canonical chart pair, aligned with the
/// twist's pair region point list.
#[derive(Debug, Clone)]
pub struct PairTransitions {
    pub pair: (usize, usize),
    /// φ_ij (i<j) per region point, row-major r×r.
    pub phi: Vec<C64>,
    /// φ_ij⁻¹ = φ_ji.
    pub phi_inv: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct TwistedBundle {
    pub rank: usize,
    pub blocks: Vec<Block>,
    pub twist: TwistData,
    pub pairs: Vec<PairTransitions>,
}

impl TwistedBundle {
    pub fn from_blocks(twist: TwistData, blocks: Vec<Block>) -> Result<TwistedBundle> {
        let cover = &twist.cover;
        let grid = &cover.grid;
        let rank: usize = blocks.iter().map(Block::rank).sum();
        if rank == 0 {
            return Err(Error::Config("bundle rank must be ≥ 1".into()));
        }
        for b in &blocks {
            match b {
                Block::Trivial { rank } if *rank == 0 => {
                    return Err(Error::Config("trivial block rank must be ≥ 1".into()))
                }
                Block::ClockShift { order, alpha } => {
                    if *order == 0 {
                        return Err(Error::Config("clock-shift order must be ≥ 1".into()));
                    }
                    if cover.sub_axes != [2 * alpha, 2 * alpha + 1] {
                        return Err(Error::Config(format!(
                            "clock-shift block on coordinate {alpha} needs a cover \
                             subdividing axes {:?}, got {:?}",
                            [2 * alpha, 2 * alpha + 1],
                            cover.sub_axes
                        )));
                    }
                }
                Block::Theta { windings } => {
                    if windings.len() != grid.n {
                        return Err(Error::ShapeMismatch(format!(
                            "theta block needs {} windings, got {}",
                            grid.n,
                            windings.len()
                        )));
                    }
                    for (a, &d) in windings.iter().enumerate() {
                        if d != 0 && !cover.sub_axes.contains(&(2 * a + 1)) {
                            return Err(Error::Config(format!(
                                "theta winding on coordinate {a} needs axis {} subdivided",
                                2 * a + 1
                            )));
                        }
                    }
                }
                _ => {}
            }
        }
        let mut pairs = Vec::with_capacity(twist.pairs.len());
        for pd in &twist.pairs {
            let (i, j) = pd.pair;
            let npts = pd.region.points.len();
            let mut phi = vec![C64::new(0.0, 0.0); npts * rank * rank];
            let mut phi_inv = phi.clone();
            for (slot, &p32) in pd.region.points.iter().enumerate() {
                let coords = grid.coords(p32 as usize);
                let mat = &mut phi[slot * rank * rank..(slot + 1) * rank * rank];
                let inv = &mut phi_inv[slot * rank * rank..(slot + 1) * rank * rank];
                let mut off = 0usize;
                for b in &blocks {
                    let br = b.rank();
                    let bp = block_phi(b, cover, i, j, &coords);
                    let bi = block_inv(b, &bp);
                    for row in 0..br {
                        for col in 0..br {
                            mat[(off + row) * rank + off + col] = bp[row * br + col];
                            inv[(off + row) * rank + off + col] = bi[row * br + col];
                        }
                    }
                    off += br;
                }
            }
            pairs.push(PairTransitions { pair: (i, j), phi, phi_inv });
        }
        Ok(TwistedBundle { rank, blocks, twist, pairs })
    }

    pub fn cover(&self) -> &ChartCover {
        &self.twist.cover
    }

    pub fn grid(&self) -> &Grid {
        &self.twist.cover.grid
    }

    fn pair_idx(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().position(|pt| pt.pair == key)
    }

    /// φ_ij at flat grid point p (any index order, Id on the diagonal).
    pub fn transition(&self, i: usize, j: usize, p: usize) -> Option<Vec<C64>> {
        if i == j {
            return Some(linalg::identity(self.rank));
        }
        let idx = self.pair_idx(i, j)?;
        let pd = &self.twist.pairs[idx];
        let slot = sparse_slot(&pd.region.points, p)?;
        let rr = self.rank * self.rank;
        let src = if i < j { &self.pairs[idx].phi } else { &self.pairs[idx].phi_inv };
        Some(src[slot * rr..(slot + 1) * rr].to_vec())
    }
}

/// House cover: subdivide every y-axis (the winding axes of theta factors).
pub fn default_cover(grid: &Grid) -> Result<ChartCover> {
    let w = ChartCover::standard_halfwidth(grid);
    let axes: Vec<usize> = (0..grid.n).map(|a| 2 * a + 1).collect();
    ChartCover::new(grid.clone(), axes, w)
}

pub fn build_trivial_bundle(grid: &Grid, rank: usize) -> Result<TwistedBundle> {
    let cover = default_cover(grid)?;
    TwistedBundle::from_blocks(build_trivial_twist(&cover), vec![Block::Trivial { rank }])
}

/// Order-r clock-and-shift bundle on the four-chart cover of the first
/// complex coordinate, carrying the matching twist.
pub fn build_clock_shift_bundle(grid: &Grid, order: usize) -> Result<TwistedBundle> {
    let w = ChartCover::standard_halfwidth(grid);
    let cover = ChartCover::quad(grid.clone(), 0, 1, w)?;
    let twist = build_clock_shift_twist(&cover, order)?;
    TwistedBundle::from_blocks(twist, vec![Block::ClockShift { order, alpha: 0 }])
}

/// Untwisted line bundle of degree d_α along each complex coordinate; the
/// n = 1 case is the classical degree-d theta line bundle.
pub fn build_theta_bundle(grid: &Grid, windings: &[i64]) -> Result<TwistedBundle> {
    let cover = default_cover(grid)?;
    TwistedBundle::from_blocks(
        build_trivial_twist(&cover),
        vec![Block::Theta { windings: windings.to_vec() }],
    )
}

fn covers_match(a: &ChartCover, b: &ChartCover) -> bool {
    a.sub_axes == b.sub_axes
        && a.halfwidth == b.halfwidth
        && a.grid.dims == b.grid.dims
        && a.grid.periods == b.grid.periods
}

fn twists_match(a: &TwistData, b: &TwistData) -> bool {
    if !covers_match(&a.cover, &b.cover) {
        return false;
    }
    let close = |x: &[C64], y: &[C64]| {
        x.len() == y.len()
            && x.iter().zip(y).all(|(u, v)| (u - v).norm() <= ALGEBRAIC_TOL)
    };
    a.pairs.len() == b.pairs.len()
        && a.triples.len() == b.triples.len()
        && a.pairs.iter().zip(&b.pairs).all(|(x, y)| {
            x.pair == y.pair && close(&x.beta.values, &y.beta.values)
        })
        && a.triples.iter().zip(&b.triples).all(|(x, y)| {
            x.triple == y.triple && close(&x.alpha.values, &y.alpha.values)
        })
        && a.b.iter().zip(&b.b).all(|(x, y)| close(&x.data, &y.data))
}

/// Block-diagonal sum; all summands must carry the same twist on the same
/// cover.
pub fn build_direct_sum(parts: &[&TwistedBundle]) -> Result<TwistedBundle> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Config("direct sum needs at least one summand".into()))?;
    for p in &parts[1..] {
        if !twists_match(&first.twist, &p.twist) {
            return Err(Error::Config(
                "direct sum requires identical twists on identical covers".into(),
            ));
        }
    }
    let blocks: Vec<Block> = parts.iter().flat_map(|p| p.blocks.clone()).collect();
    TwistedBundle::from_blocks(first.twist.clone(), blocks)
}

/// Swap the twist bookkeeping (B, β) under a bundle whose transitions realize
/// the same α, e.g. to place a trivial-α bundle over a global B-field.
pub fn attach_twist(bundle: &TwistedBundle, twist: TwistData) -> Result<TwistedBundle> {
    if !covers_match(bundle.cover(), &twist.cover) {
        return Err(Error::Config("attach_twist: cover layout differs".into()));
    }
    let old = &bundle.twist;
    for (to, tn) in old.triples.iter().zip(&twist.triples) {
        if to.triple != tn.triple {
            return Err(Error::Config("attach_twist: triple layout differs".into()));
        }
        let defect = to
            .alpha
            .values
            .iter()
            .zip(&tn.alpha.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if defect > ALGEBRAIC_TOL {
            return Err(Error::Config(format!(
                "attach_twist: α differs from the bundle's cocycle by {defect:.3e}"
            )));
        }
    }
    TwistedBundle::from_blocks(twist, bundle.blocks.clone())
}

#[derive(Debug, Clone)]
pub struct BundleReport {
    /// sup |φ_ii − Id|.
    pub identity_defect: f64,
    /// sup |φ_ij·φ_ji − Id| over pairs.
    pub inverse_defect: f64,
    /// sup |φ_ki·φ_jk·φ_ij − α_ijk·Id| over triples.
    pub cocycle_defect: f64,
    /// sup |∂̄φ_ij| over pairs (component-aware stencils).
    pub dbar_defect: f64,
    pub tol_algebraic: f64,
    pub tol_differential: f64,
    pub pass: bool,
}

pub fn validate_bundle(bundle: &TwistedBundle, tol: Option<(f64, f64)>) -> BundleReport {
    let grid = bundle.grid();
    let r = bundle.rank;
    let rr = r * r;
    let (tol_algebraic, tol_differential) =
        tol.unwrap_or((ALGEBRAIC_TOL, fd_tol(grid.max_spacing())));
    let id = linalg::identity(r);

    let mut identity_defect = 0.0f64;
    for i in 0..bundle.cover().ncharts() {
        let phi = bundle.transition(i, i, 0).expect("diagonal transition");
        let mut d = phi;
        linalg::axpy(C64::new(-1.0, 0.0), &id, &mut d);
        identity_defect = identity_defect.max(linalg::sup_entry(&d));
    }

    let mut inverse_defect = 0.0f64;
    for (idx, pt) in bundle.pairs.iter().enumerate() {
        let npts = bundle.twist.pairs[idx].region.points.len();
        for slot in 0..npts {
            let a = &pt.phi[slot * rr..(slot + 1) * rr];
            let b = &pt.phi_inv[slot * rr..(slot + 1) * rr];
            let mut d = linalg::mul(r, a, b);
            linalg::axpy(C64::new(-1.0, 0.0), &id, &mut d);
            inverse_defect = inverse_defect.max(linalg::sup_entry(&d));
        }
    }

    let mut cocycle_defect = 0.0f64;
    for td in &bundle.twist.triples {
        let (i, j, k) = td.triple;
        for (slot, &p32) in td.region.points.iter().enumerate() {
            let p = p32 as usize;
            let (f_ki, f_jk, f_ij) = (
                bundle.transition(k, i, p).expect("triple point in pair region"),
                bundle.transition(j, k, p).expect("triple point in pair region"),
                bundle.transition(i, j, p).expect("triple point in pair region"),
            );
            let mut t = linalg::mul3(r, &f_ki, &f_jk, &f_ij);
            linalg::axpy(-td.alpha.values[slot], &id, &mut t);
            cocycle_defect = cocycle_defect.max(linalg::sup_entry(&t));
        }
    }

    let order = grid.stencil_order();
    let mut dbar_defect = 0.0f64;
    for (idx, pt) in bundle.pairs.iter().enumerate() {
        let region = &bundle.twist.pairs[idx].region;
        for e in 0..rr {
            let get = |p: usize| {
                let slot = sparse_slot(&region.points, p).expect("stencil point in region");
                pt.phi[slot * rr + e]
            };
            for alpha in 0..grid.n {
                let (_, anti) = region_wirtinger(grid, region, &get, alpha, order);
                for d in anti.into_iter().flatten() {
                    dbar_defect = dbar_defect.max(d.norm());
                }
            }
        }
    }

    let pass = identity_defect <= tol_algebraic
        && inverse_defect <= tol_algebraic
        && cocycle_defect <= tol_algebraic
        && dbar_defect <= tol_differential;
    BundleReport {
        identity_defect,
        inverse_defect,
        cocycle_defect,
        dbar_defect,
        tol_algebraic,
        tol_differential,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusGeometry;
    use crate::twist::build_global_b;
    use std::f64::consts::PI;

    fn grid32() -> Grid {
        Grid::uniform(1, 32).unwrap()
    }

    #[test]
    fn trivial_bundle_validates_exactly() {
        let b = build_trivial_bundle(&grid32(), 3).unwrap();
        assert_eq!(b.rank, 3);
        let rep = validate_bundle(&b, None);
        assert!(rep.pass);
        assert_eq!(rep.identity_defect, 0.0);
        assert_eq!(rep.inverse_defect, 0.0);
        assert_eq!(rep.cocycle_defect, 0.0);
        // FD on constant data leaves only stencil-weight summation residue
        assert!(rep.dbar_defect < 1e-14);
    }

    #[test]
    fn clock_shift_seam_matrices() {
        let b = build_clock_shift_bundle(&grid32(), 2).unwrap();
        let g = b.grid().clone();
        // wrap seam of the shift pair (0,1): torus point (8, 0); arcs differ
        // only on axis 1 with γ = [0,−1], so φ_01 = S⁻¹ = S for r = 2
        let p = g.flat(&[8, 0]);
        let phi = b.transition(0, 1, p).unwrap();
        let s = [
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ];
        for (a, e) in phi.iter().zip(&s) {
            assert!((a - e).norm() < 1e-14);
        }
        // wrap seam of the clock pair (0,2): torus point (0, 8), γ = [−1,0],
        // so φ_02 = C⁻¹ = diag(1,−1)
        let p = g.flat(&[0, 8]);
        let phi = b.transition(0, 2, p).unwrap();
        let c = [
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 0.0),
        ];
        for (a, e) in phi.iter().zip(&c) {
            assert!((a - e).norm() < 1e-14);
        }
        let rep = validate_bundle(&b, None);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.cocycle_defect < 1e-13);
    }

    #[test]
    fn theta_wrap_transition_matches_closed_form() {
        let g = grid32();
        let d = 3i64;
        let b = build_theta_bundle(&g, &[d]).unwrap();
        // wrap seam: torus y = 0, chart 0 lift ỹ = 0; φ_01 = e^{2πi d z̃₀}
        for ix in [0usize, 5, 17] {
            let p = g.flat(&[ix, 0]);
            let phi = b.transition(0, 1, p).unwrap()[0];
            let z = C64::new(ix as f64 / 32.0, 0.0);
            let expect = (TAU * d as f64 * C64::new(0.0, 1.0) * z).exp();
            assert!((phi - expect).norm() < 1e-12, "ix={ix} {phi} {expect}");
        }
        // interior seam: torus y = 16, same lift in both charts, φ = 1
        let p = g.flat(&[7, 16]);
        let phi = b.transition(0, 1, p).unwrap()[0];
        assert!((phi - C64::new(1.0, 0.0)).norm() < 1e-14);
        // validation passes at winding 2
        let rep = validate_bundle(&build_theta_bundle(&g, &[2]).unwrap(), None);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn theta_dbar_residue_matches_stencil_symbol() {
        // ∂̄ of e^{2πid z̃} cancels to the θ⁶/252 symbol mismatch between the
        // trigonometric and exponential stencil responses, scaled by |φ|.
        // Winding 3 at N = 32 sits above the house tolerance; the residue
        // itself is predicted by the symbol analysis.
        let g = grid32();
        let rep = validate_bundle(&build_theta_bundle(&g, &[3]).unwrap(), None);
        assert!(!rep.pass);
        let k = TAU * 3.0;
        let theta = k / 32.0;
        // largest FD-valid wrap row sits at chart-0 lift ỹ = −4/32
        let phi_max = (k * 4.0 / 32.0).exp();
        let predict = k * theta.powi(6) / 252.0 * phi_max;
        assert!(
            (rep.dbar_defect - predict).abs() < 0.02 * predict,
            "residue {} vs predicted {}",
            rep.dbar_defect,
            predict
        );
    }

    #[test]
    fn theta_zero_is_trivial() {
        let g = grid32();
        let b = build_theta_bundle(&g, &[0]).unwrap();
        for pd in &b.twist.pairs {
            for (slot, _) in pd.region.points.iter().enumerate() {
                let v = b.pairs[0].phi[slot];
                assert!((v - C64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn injected_nonholomorphic_factor_fails_dbar_check() {
        let g = grid32();
        let mut b = build_trivial_bundle(&g, 1).unwrap();
        // multiply φ_01 by the periodic factor e^{cos 2πx}, whose ∂̄ is
        // −π sin(2πx) e^{cos 2πx}; the validator should report its sup
        let region = b.twist.pairs[0].region.clone();
        for (slot, &p32) in region.points.iter().enumerate() {
            let x = g.coord_value(0, g.coords(p32 as usize)[0]);
            b.pairs[0].phi[slot] *= C64::new((TAU * x).cos().exp(), 0.0);
        }
        let rep = validate_bundle(&b, None);
        assert!(!rep.pass);
        let expect = (0..32)
            .map(|ix| {
                let t = TAU * ix as f64 / 32.0;
                PI * t.sin().abs() * t.cos().exp()
            })
            .fold(0.0f64, f64::max);
        assert!(
            (rep.dbar_defect - expect).abs() < 1e-3 * expect,
            "dbar {} vs {}",
            rep.dbar_defect,
            expect
        );
        // tampering φ without φ_inv also breaks the inverse identity
        assert!(rep.inverse_defect > 0.1);
    }

    #[test]
    fn direct_sum_concatenates_blocks() {
        let g = grid32();
        let a = build_theta_bundle(&g, &[1]).unwrap();
        let b = build_theta_bundle(&g, &[-1]).unwrap();
        let s = build_direct_sum(&[&a, &b]).unwrap();
        assert_eq!(s.rank, 2);
        let rep = validate_bundle(&s, None);
        assert!(rep.pass, "{rep:?}");
        // off-diagonal entries stay zero at a wrap-seam point
        let p = g.flat(&[3, 0]);
        let phi = s.transition(0, 1, p).unwrap();
        assert_eq!(phi[1], C64::new(0.0, 0.0));
        assert_eq!(phi[2], C64::new(0.0, 0.0));
        assert!((phi[0] * phi[3] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn direct_sum_rejects_mismatched_twists() {
        let g = grid32();
        let a = build_theta_bundle(&g, &[1]).unwrap();
        let c = build_clock_shift_bundle(&g, 2).unwrap();
        assert!(matches!(build_direct_sum(&[&a, &c]), Err(Error::Config(_))));
    }

    #[test]
    fn attach_twist_swaps_b_field() {
        let g = grid32();
        let b = build_theta_bundle(&g, &[1]).unwrap();
        let geo = TorusGeometry::flat(g.clone());
        let mut form = geo.omega();
        for v in form.data.iter_mut() {
            *v *= -4.0;
        }
        let gb = build_global_b(b.cover(), &form).unwrap();
        let b2 = attach_twist(&b, gb).unwrap();
        assert!(validate_bundle(&b2, None).pass);
        let cs = build_clock_shift_bundle(&g, 2).unwrap();
        assert!(attach_twist(&cs, build_trivial_twist(cs.cover())).is_err());
    }
}
