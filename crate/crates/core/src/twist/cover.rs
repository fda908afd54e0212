//! Axis-aligned band covers.
//!
//! A cover subdivides some real axes into two arcs each; a chart is a choice
//! of arc per subdivided axis, so there are 2^s charts.  Each chart is a
//! rectangular box in *lifted* (unwrapped) coordinates: arc 0 covers
//! [−w, N/2+w) and arc 1 covers [N/2−w, N+w), where w is the overlap
//! halfwidth.  Arc a owns [a·N/2, (a+1)·N/2); the chart of record of a point
//! takes the owning arc on every subdivided axis.
//!
//! With w ≤ N/4 every torus point has at most one lift into a given chart, so
//! "p ∈ U_i" and the integer deck shift γ between two charts' lifts are
//! well-defined pointwise.  γ is constant on connected components of an
//! overlap; all locally-constant Čech data is stored per component.

use crate::grid::Grid;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Chart {
    /// Arc choice per subdivided axis (cover.sub_axes order).
    pub arcs: Vec<u8>,
    /// Lifted lower corner per real axis (0 on full axes).
    pub lo: Vec<isize>,
    /// Box length per real axis (N on full axes, N/2+2w on subdivided ones).
    pub len: Vec<usize>,
}

impl Chart {
    pub fn box_points(&self) -> usize {
        self.len.iter().product()
    }

    /// Row-major index into the chart box.
    pub fn local_flat(&self, local: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &c) in local.iter().enumerate() {
            debug_assert!(c < self.len[a]);
            idx = idx * self.len[a] + c;
        }
        idx
    }

    /// Inverse of `local_flat`.
    pub fn local_coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.len.len()];
        for a in (0..self.len.len()).rev() {
            out[a] = idx % self.len[a];
            idx /= self.len[a];
        }
        out
    }

    /// Torus coordinates of a box point.
    pub fn torus_coords(&self, dims: &[usize], idx: usize) -> Vec<usize> {
        self.local_coords(idx)
            .iter()
            .enumerate()
            .map(|(a, &c)| (self.lo[a] + c as isize).rem_euclid(dims[a] as isize) as usize)
            .collect()
    }
}

/// Connected region of grid points (an overlap U_ij, U_ijk, …) together with
/// its decomposition into wrap-connected components.
#[derive(Debug, Clone)]
pub struct Region {
    /// Component id per grid point; −1 outside the region.
    pub comp_id: Vec<i32>,
    pub ncomp: usize,
    /// Sorted flat ids of the region's points.
    pub points: Vec<u32>,
}

impl Region {
    pub fn from_mask(grid: &Grid, mask: &[bool]) -> Region {
        let mut comp_id = vec![-1i32; mask.len()];
        let mut points = Vec::new();
        let mut ncomp = 0usize;
        let mut stack = Vec::new();
        for start in 0..mask.len() {
            if !mask[start] || comp_id[start] >= 0 {
                continue;
            }
            let id = ncomp as i32;
            ncomp += 1;
            comp_id[start] = id;
            stack.push(start);
            while let Some(p) = stack.pop() {
                for axis in 0..grid.dims.len() {
                    for off in [-1isize, 1] {
                        let q = grid.shift(p, axis, off);
                        if mask[q] && comp_id[q] < 0 {
                            comp_id[q] = id;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        for (p, &m) in mask.iter().enumerate() {
            if m {
                points.push(p as u32);
            }
        }
        Region { comp_id, ncomp, points }
    }

    pub fn contains(&self, p: usize) -> bool {
        self.comp_id[p] >= 0
    }

    pub fn component(&self, p: usize) -> Option<usize> {
        let c = self.comp_id[p];
        (c >= 0).then_some(c as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ChartCover {
    pub grid: Grid,
    /// Subdivided axes, ascending.
    pub sub_axes: Vec<usize>,
    pub halfwidth: usize,
    pub charts: Vec<Chart>,
}

impl ChartCover {
    pub fn new(grid: Grid, sub_axes: Vec<usize>, halfwidth: usize) -> Result<ChartCover> {
        let naxes = grid.dims.len();
        let mut seen = vec![false; naxes];
        for &a in &sub_axes {
            if a >= naxes || seen[a] {
                return Err(Error::Config(format!("bad subdivided axis list {sub_axes:?}")));
            }
            seen[a] = true;
        }
        let mut sorted = sub_axes.clone();
        sorted.sort_unstable();
        if sorted != sub_axes {
            return Err(Error::Config("subdivided axes must be ascending".into()));
        }
        let radius = grid.stencil_order().radius();
        if halfwidth < 2 * radius {
            return Err(Error::Config(format!(
                "overlap halfwidth {halfwidth} below 2·stencil radius {}",
                2 * radius
            )));
        }
        for &a in &sub_axes {
            let n = grid.dims[a];
            if n % 2 != 0 || halfwidth > n / 4 {
                return Err(Error::Config(format!(
                    "axis {a} with {n} points cannot host halfwidth {halfwidth} (need even N, w ≤ N/4)"
                )));
            }
        }
        let s = sub_axes.len();
        let mut charts = Vec::with_capacity(1 << s);
        for bits in 0..(1usize << s) {
            let arcs: Vec<u8> = (0..s)
                .map(|k| ((bits >> (s - 1 - k)) & 1) as u8)
                .collect();
            let mut lo = vec![0isize; naxes];
            let mut len: Vec<usize> = grid.dims.clone();
            for (k, &a) in sub_axes.iter().enumerate() {
                let n = grid.dims[a];
                lo[a] = arcs[k] as isize * (n / 2) as isize - halfwidth as isize;
                len[a] = n / 2 + 2 * halfwidth;
            }
            charts.push(Chart { arcs, lo, len });
        }
        Ok(ChartCover { grid, sub_axes, halfwidth, charts })
    }

    /// Two-chart cover subdividing a single axis.
    pub fn bands(grid: Grid, axis: usize, halfwidth: usize) -> Result<ChartCover> {
        ChartCover::new(grid, vec![axis], halfwidth)
    }

    /// Four-chart cover subdividing two axes.
    pub fn quad(grid: Grid, axis_a: usize, axis_b: usize, halfwidth: usize) -> Result<ChartCover> {
        ChartCover::new(grid, vec![axis_a, axis_b], halfwidth)
    }

    /// Default halfwidth: the per-dimension house value clamped to what the
    /// stencil radius demands and the axis length allows.
    pub fn standard_halfwidth(grid: &Grid) -> usize {
        let house = match grid.n {
            1 => crate::constants::OVERLAP_HALFWIDTH_N1,
            _ => crate::constants::OVERLAP_HALFWIDTH_N2,
        };
        let cap = grid.dims.iter().map(|&n| n / 4).min().unwrap_or(house);
        house.min(cap).max(2 * grid.stencil_order().radius())
    }

    pub fn ncharts(&self) -> usize {
        self.charts.len()
    }

    /// Lift of global index `i` on `axis` into chart `c`, if the point's
    /// axis-coordinate is covered.
    pub fn lift(&self, c: usize, axis: usize, i: usize) -> Option<isize> {
        let chart = &self.charts[c];
        let n = self.grid.dims[axis] as isize;
        let lo = chart.lo[axis];
        let hi = lo + chart.len[axis] as isize;
        for t in [0isize, -1, 1] {
            let j = i as isize + t * n;
            if j >= lo && j < hi {
                return Some(j);
            }
        }
        None
    }

    pub fn lift_point(&self, c: usize, coords: &[usize]) -> Option<Vec<isize>> {
        let mut out = Vec::with_capacity(coords.len());
        for (axis, &i) in coords.iter().enumerate() {
            out.push(self.lift(c, axis, i)?);
        }
        Some(out)
    }

    pub fn contains(&self, c: usize, coords: &[usize]) -> bool {
        coords
            .iter()
            .enumerate()
            .all(|(axis, &i)| self.lift(c, axis, i).is_some())
    }

    /// Chart of record: the chart made of owning arcs.
    pub fn owner_of(&self, coords: &[usize]) -> usize {
        let s = self.sub_axes.len();
        let mut idx = 0usize;
        for (k, &a) in self.sub_axes.iter().enumerate() {
            let arc = (coords[a] >= self.grid.dims[a] / 2) as usize;
            idx |= arc << (s - 1 - k);
        }
        idx
    }

    /// Owned sub-box of a chart: (lo, len) per axis in plain grid coordinates.
    pub fn owned_box(&self, c: usize) -> (Vec<usize>, Vec<usize>) {
        let chart = &self.charts[c];
        let mut lo = vec![0usize; self.grid.dims.len()];
        let mut len = self.grid.dims.clone();
        for (k, &a) in self.sub_axes.iter().enumerate() {
            let n = self.grid.dims[a];
            lo[a] = chart.arcs[k] as usize * (n / 2);
            len[a] = n / 2;
        }
        (lo, len)
    }

    /// Per-axis deck shift γ with lift_a = lift_b + γ·N on the overlap.
    pub fn gamma(&self, a: usize, b: usize, coords: &[usize]) -> Option<Vec<i32>> {
        let la = self.lift_point(a, coords)?;
        let lb = self.lift_point(b, coords)?;
        Some(
            la.iter()
                .zip(&lb)
                .zip(&self.grid.dims)
                .map(|((x, y), &n)| ((x - y) / n as isize) as i32)
                .collect(),
        )
    }

    fn mask_of(&self, charts: &[usize]) -> Vec<bool> {
        let npts = self.grid.npoints();
        let mut mask = vec![false; npts];
        for p in 0..npts {
            let c = self.grid.coords(p);
            if charts.iter().all(|&ci| self.contains(ci, &c)) {
                mask[p] = true;
            }
        }
        mask
    }

    pub fn region(&self, charts: &[usize]) -> Region {
        Region::from_mask(&self.grid, &self.mask_of(charts))
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let m = self.ncharts();
        let mut out = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                out.push((i, j));
            }
        }
        out
    }

    pub fn triples(&self) -> Vec<(usize, usize, usize)> {
        let m = self.ncharts();
        let mut out = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                for k in j + 1..m {
                    out.push((i, j, k));
                }
            }
        }
        out
    }

    pub fn quadruples(&self) -> Vec<(usize, usize, usize, usize)> {
        let m = self.ncharts();
        let mut out = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                for k in j + 1..m {
                    for l in k + 1..m {
                        out.push((i, j, k, l));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cover2() -> ChartCover {
        ChartCover::bands(Grid::uniform(1, 32).unwrap(), 1, 6).unwrap()
    }

    fn cover4() -> ChartCover {
        ChartCover::quad(Grid::uniform(1, 32).unwrap(), 0, 1, 6).unwrap()
    }

    #[test]
    fn every_point_covered_and_owned() {
        for cover in [cover2(), cover4()] {
            let g = &cover.grid;
            for p in 0..g.npoints() {
                let c = g.coords(p);
                let owner = cover.owner_of(&c);
                assert!(cover.contains(owner, &c));
                assert!((0..cover.ncharts()).any(|i| cover.contains(i, &c)));
            }
        }
    }

    #[test]
    fn owned_margin_stays_in_chart() {
        // points within w−2·radius of the owned box still lift into the owner
        let cover = cover4();
        let g = &cover.grid;
        let margin = (cover.halfwidth - 4) as isize; // radius 2 twice
        for p in 0..g.npoints() {
            let c = g.coords(p);
            let owner = cover.owner_of(&c);
            for axis in 0..2 {
                for off in [-margin, margin] {
                    let q = g.coords(g.shift(p, axis, off));
                    // shifted point may change owner, but must stay inside
                    // the original owner's chart box
                    assert!(
                        cover.lift(owner, axis, q[axis]).is_some(),
                        "p={c:?} axis={axis} off={off}"
                    );
                }
            }
        }
    }

    #[test]
    fn lifts_are_unique_and_consistent() {
        let cover = cover2();
        let g = &cover.grid;
        for p in 0..g.npoints() {
            let c = g.coords(p);
            for chart in 0..2 {
                if let Some(l) = cover.lift_point(chart, &c) {
                    for (axis, &v) in l.iter().enumerate() {
                        let n = g.dims[axis] as isize;
                        assert_eq!(v.rem_euclid(n) as usize, c[axis]);
                        let ch = &cover.charts[chart];
                        assert!(v >= ch.lo[axis] && v < ch.lo[axis] + ch.len[axis] as isize);
                    }
                }
            }
        }
    }

    #[test]
    fn band_pair_has_two_components_with_constant_gamma() {
        let cover = cover2();
        let region = cover.region(&[0, 1]);
        assert_eq!(region.ncomp, 2);
        // γ is constant per component
        let g = &cover.grid;
        let mut gamma_by_comp: Vec<Option<Vec<i32>>> = vec![None; region.ncomp];
        for &p in &region.points {
            let c = g.coords(p as usize);
            let gam = cover.gamma(0, 1, &c).unwrap();
            let comp = region.component(p as usize).unwrap();
            match &gamma_by_comp[comp] {
                None => gamma_by_comp[comp] = Some(gam),
                Some(prev) => assert_eq!(prev, &gam),
            }
        }
        let mut gams: Vec<Vec<i32>> = gamma_by_comp.into_iter().flatten().collect();
        gams.sort();
        assert_eq!(gams, vec![vec![0, -1], vec![0, 0]]);
    }

    #[test]
    fn quad_cover_component_counts() {
        let cover = cover4();
        let counts: Vec<usize> = cover
            .pairs()
            .iter()
            .map(|&(i, j)| cover.region(&[i, j]).ncomp)
            .collect();
        assert_eq!(counts, vec![2, 2, 4, 4, 2, 2]);
        for (i, j, k) in cover.triples() {
            assert_eq!(cover.region(&[i, j, k]).ncomp, 4);
        }
        assert_eq!(cover.region(&[0, 1, 2, 3]).ncomp, 4);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(ChartCover::bands(Grid::uniform(1, 32).unwrap(), 1, 9).is_err()); // w > N/4
        assert!(ChartCover::bands(Grid::uniform(1, 32).unwrap(), 1, 3).is_err()); // w < 2·radius
        assert!(ChartCover::new(Grid::uniform(1, 32).unwrap(), vec![1, 1], 6).is_err());
        assert!(ChartCover::new(Grid::uniform(1, 32).unwrap(), vec![1, 0], 6).is_err());
    }

    #[test]
    fn owner_partition_matches_owned_boxes() {
        let cover = cover4();
        let g = &cover.grid;
        let mut count = 0usize;
        for chart in 0..cover.ncharts() {
            let (lo, len) = cover.owned_box(chart);
            let mut pts = 1usize;
            for a in 0..g.dims.len() {
                pts *= len[a];
                assert!(lo[a] + len[a] <= g.dims[a]);
            }
            count += pts;
        }
        assert_eq!(count, g.npoints());
    }
}
