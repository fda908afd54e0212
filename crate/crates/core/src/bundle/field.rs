//! Global fields in owner gauge and their chart views.
//!
//! Endomorphism-valued data is stored once per grid point, expressed in the
//! frame of the point's owner chart.  A chart view conjugates through the
//! transitions, X_c = φ_co·X_o·φ_oc; the cocycle scalar α is unimodular and
//! drops out, so views through different overlap routes agree to rounding.
//! Form components never rotate because charts differ by lattice translations.

use num_complex::Complex64 as C64;

use crate::bundle::transition::TwistedBundle;
use crate::linalg;
use crate::twist::{box_index, ChartCover};

/// Owner chart and owner-box index of every grid point.
#[derive(Debug, Clone)]
pub struct OwnerIndex {
    pub owner: Vec<u16>,
    pub box_idx: Vec<u32>,
}

impl OwnerIndex {
    pub fn build(cover: &ChartCover) -> OwnerIndex {
        let npts = cover.grid.npoints();
        let mut owner = vec![0u16; npts];
        let mut box_idx = vec![0u32; npts];
        for p in 0..npts {
            let coords = cover.grid.coords(p);
            let c = cover.owner_of(&coords);
            owner[p] = c as u16;
            box_idx[p] = box_index(cover, c, &coords).expect("owner covers point") as u32;
        }
        OwnerIndex { owner, box_idx }
    }
}

/// Component layout of a form-valued field over n complex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// A_α dz^α.
    OneZero,
    /// A_ᾱ dz̄^α.
    ZeroOne,
    /// A_{αβ̄} dz^α∧dz̄^β, component index α·n + β.
    OneOne,
}

impl FormKind {
    pub fn ncomp(self, n: usize) -> usize {
        match self {
            FormKind::OneZero | FormKind::ZeroOne => n,
            FormKind::OneOne => n * n,
        }
    }
}

/// Endomorphism field in owner gauge: grid-major, row-major r×r per point.
#[derive(Debug, Clone)]
pub struct EndoField {
    pub r: usize,
    pub data: Vec<C64>,
}

impl EndoField {
    pub fn zeros(npoints: usize, r: usize) -> EndoField {
        EndoField { r, data: vec![C64::new(0.0, 0.0); npoints * r * r] }
    }

    pub fn npoints(&self) -> usize {
        self.data.len() / (self.r * self.r)
    }

    pub fn at(&self, p: usize) -> &[C64] {
        let rr = self.r * self.r;
        &self.data[p * rr..(p + 1) * rr]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [C64] {
        let rr = self.r * self.r;
        &mut self.data[p * rr..(p + 1) * rr]
    }
}

/// Form-valued endomorphism field in owner gauge: grid-major, then component,
/// then r×r.
#[derive(Debug, Clone)]
pub struct EndForm {
    pub kind: FormKind,
    pub ncomp: usize,
    pub r: usize,
    pub data: Vec<C64>,
}

impl EndForm {
    pub fn zeros(npoints: usize, n: usize, r: usize, kind: FormKind) -> EndForm {
        let ncomp = kind.ncomp(n);
        EndForm { kind, ncomp, r, data: vec![C64::new(0.0, 0.0); npoints * ncomp * r * r] }
    }

    pub fn npoints(&self) -> usize {
        self.data.len() / (self.ncomp * self.r * self.r)
    }

    pub fn at(&self, p: usize, comp: usize) -> &[C64] {
        let rr = self.r * self.r;
        let base = (p * self.ncomp + comp) * rr;
        &self.data[base..base + rr]
    }

    pub fn at_mut(&mut self, p: usize, comp: usize) -> &mut [C64] {
        let rr = self.r * self.r;
        let base = (p * self.ncomp + comp) * rr;
        &mut self.data[base..base + rr]
    }
}

/// Matrix-valued field on full chart boxes with a validity margin: entries
/// within `margin` of a subdivided-axis box edge hold no meaningful data
/// (derivative chains shrink the valid zone from the edges inward).  Layout
/// per chart: box-major, then component, then row-major r×r.
#[derive(Debug, Clone)]
pub struct ChartMatrixField {
    pub ncomp: usize,
    pub r: usize,
    pub margin: usize,
    pub charts: Vec<Vec<C64>>,
}

impl ChartMatrixField {
    pub fn zeros(cover: &ChartCover, ncomp: usize, r: usize, margin: usize) -> ChartMatrixField {
        let charts = cover
            .charts
            .iter()
            .map(|ch| vec![C64::new(0.0, 0.0); ch.box_points() * ncomp * r * r])
            .collect();
        ChartMatrixField { ncomp, r, margin, charts }
    }

    pub fn at(&self, c: usize, b: usize, comp: usize) -> &[C64] {
        let rr = self.r * self.r;
        let base = (b * self.ncomp + comp) * rr;
        &self.charts[c][base..base + rr]
    }

    pub fn at_mut(&mut self, c: usize, b: usize, comp: usize) -> &mut [C64] {
        let rr = self.r * self.r;
        let base = (b * self.ncomp + comp) * rr;
        &mut self.charts[c][base..base + rr]
    }

    /// Whether a local box point sits inside the valid zone.
    pub fn valid(&self, cover: &ChartCover, c: usize, local: &[usize]) -> bool {
        cover.sub_axes.iter().all(|&a| {
            local[a] >= self.margin && local[a] + self.margin < cover.charts[c].len[a]
        })
    }
}

/// Materialize an owner-gauge endo field over one full chart box.
pub fn chart_endo(bundle: &TwistedBundle, x: &EndoField, c: usize) -> Vec<C64> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let chart = &cover.charts[c];
    let r = x.r;
    let rr = r * r;
    let mut out = vec![C64::new(0.0, 0.0); chart.box_points() * rr];
    for b in 0..chart.box_points() {
        let coords = chart.torus_coords(&grid.dims, b);
        let p = grid.flat(&coords);
        let o = cover.owner_of(&coords);
        let dst = &mut out[b * rr..(b + 1) * rr];
        if o == c {
            dst.copy_from_slice(x.at(p));
        } else {
            let fwd = bundle.transition(c, o, p).expect("box point shared with owner");
            let bwd = bundle.transition(o, c, p).expect("box point shared with owner");
            dst.copy_from_slice(&linalg::mul3(r, &fwd, x.at(p), &bwd));
        }
    }
    out
}

/// Materialize an owner-gauge form field over one full chart box,
/// componentwise.
pub fn chart_form(bundle: &TwistedBundle, x: &EndForm, c: usize) -> Vec<C64> {
    let cover = bundle.cover();
    let grid = bundle.grid();
    let chart = &cover.charts[c];
    let r = x.r;
    let rr = r * r;
    let nc = x.ncomp;
    let mut out = vec![C64::new(0.0, 0.0); chart.box_points() * nc * rr];
    for b in 0..chart.box_points() {
        let coords = chart.torus_coords(&grid.dims, b);
        let p = grid.flat(&coords);
        let o = cover.owner_of(&coords);
        if o == c {
            for comp in 0..nc {
                out[(b * nc + comp) * rr..(b * nc + comp + 1) * rr]
                    .copy_from_slice(x.at(p, comp));
            }
        } else {
            let fwd = bundle.transition(c, o, p).expect("box point shared with owner");
            let bwd = bundle.transition(o, c, p).expect("box point shared with owner");
            for comp in 0..nc {
                out[(b * nc + comp) * rr..(b * nc + comp + 1) * rr]
                    .copy_from_slice(&linalg::mul3(r, &fwd, x.at(p, comp), &bwd));
            }
        }
    }
    out
}

/// Collapse a per-chart field to owner gauge: every grid point takes the
/// value its owner chart holds.  Each owned point sits at least `halfwidth`
/// from the box edges, so any margin up to the halfwidth stays valid.
pub fn gather_owned(cover: &ChartCover, own: &OwnerIndex, f: &ChartMatrixField) -> EndForm {
    assert!(f.margin <= cover.halfwidth, "owned zone narrower than margin");
    let npts = cover.grid.npoints();
    let rr = f.r * f.r;
    let mut data = vec![C64::new(0.0, 0.0); npts * f.ncomp * rr];
    for p in 0..npts {
        let c = own.owner[p] as usize;
        let b = own.box_idx[p] as usize;
        for comp in 0..f.ncomp {
            data[(p * f.ncomp + comp) * rr..(p * f.ncomp + comp + 1) * rr]
                .copy_from_slice(f.at(c, b, comp));
        }
    }
    EndForm { kind: FormKind::OneOne, ncomp: f.ncomp, r: f.r, data }
}
