//! Periodic grids over real tori and centered difference stencils.
//!
//! A complex n-torus is sampled on a 2n-dimensional periodic grid; real axis
//! 2α carries Re z_α and axis 2α+1 carries Im z_α (see `constants`).  Flat
//! indices are row-major with axis 0 slowest.  Stencils are antisymmetric
//! centered differences, so discrete integration by parts and the telescoping
//! identity Σ_p (Df)(p) = 0 hold exactly on periodic data; several residual
//! bounds in the test suite rely on that.

use num_complex::Complex64 as C64;

use crate::constants::FOURTH_ORDER_MIN_POINTS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn radius(self) -> usize {
        match self {
            StencilOrder::Second => 1,
            StencilOrder::Fourth => 2,
        }
    }

    /// First-derivative taps (offset, weight); divide by h after summing.
    pub fn d1(self) -> &'static [(isize, f64)] {
        match self {
            StencilOrder::Second => &[(-1, -0.5), (1, 0.5)],
            StencilOrder::Fourth => &[
                (-2, 1.0 / 12.0),
                (-1, -8.0 / 12.0),
                (1, 8.0 / 12.0),
                (2, -1.0 / 12.0),
            ],
        }
    }

    /// Second-derivative taps; divide by h².
    pub fn d2(self) -> &'static [(isize, f64)] {
        match self {
            StencilOrder::Second => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
            StencilOrder::Fourth => &[
                (-2, -1.0 / 12.0),
                (-1, 16.0 / 12.0),
                (0, -30.0 / 12.0),
                (1, 16.0 / 12.0),
                (2, -1.0 / 12.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Complex dimension (1 or 2).
    pub n: usize,
    /// Points per real axis, length 2n.
    pub dims: Vec<usize>,
    /// Real period per axis, length 2n.
    pub periods: Vec<f64>,
    /// periods[a] / dims[a]
    pub spacing: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, dims: Vec<usize>, periods: Vec<f64>) -> Result<Grid> {
        if n != 1 && n != 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if dims.len() != 2 * n || periods.len() != 2 * n {
            return Err(Error::ShapeMismatch(format!(
                "grid for n={n} needs {} axes, got dims {:?} periods {:?}",
                2 * n,
                dims,
                periods
            )));
        }
        if dims.iter().any(|&d| d < 4) || periods.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config(format!(
                "each axis needs ≥ 4 points and positive period (dims {dims:?})"
            )));
        }
        let spacing = dims
            .iter()
            .zip(&periods)
            .map(|(&d, &p)| p / d as f64)
            .collect();
        Ok(Grid { n, dims, periods, spacing })
    }

    /// Unit-period torus with the same resolution on every axis.
    pub fn uniform(n: usize, points_per_axis: usize) -> Result<Grid> {
        Grid::new(n, vec![points_per_axis; 2 * n], vec![1.0; 2 * n])
    }

    pub fn npoints(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Stencil order used on this grid: fourth where axes are long enough.
    pub fn stencil_order(&self) -> StencilOrder {
        if self.dims.iter().all(|&d| d >= FOURTH_ORDER_MIN_POINTS) {
            StencilOrder::Fourth
        } else {
            StencilOrder::Second
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<usize> {
        let mut c = vec![0usize; self.dims.len()];
        let mut rem = flat;
        for a in (0..self.dims.len()).rev() {
            c[a] = rem % self.dims[a];
            rem /= self.dims[a];
        }
        c
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        let mut idx = 0usize;
        for (a, &c) in coords.iter().enumerate() {
            idx = idx * self.dims[a] + c;
        }
        idx
    }

    /// Neighbor along `axis` at signed offset, wrapping periodically.
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let d = self.dims[axis] as isize;
        // stride of `axis` = product of faster dims
        let stride: usize = self.dims[axis + 1..].iter().product();
        let block = stride * self.dims[axis];
        let base = flat - flat % block;
        let within = flat - base;
        let i = (within / stride) as isize;
        let rest = within % stride;
        let j = (i + offset).rem_euclid(d) as usize;
        base + j * stride + rest
    }

    /// Real coordinate of grid index `i` on `axis`.
    pub fn coord_value(&self, axis: usize, i: usize) -> f64 {
        i as f64 * self.spacing[axis]
    }

    /// Axis-`a` centered first derivative of a periodic complex field.
    pub fn deriv_axis(&self, f: &[C64], axis: usize, order: StencilOrder) -> Vec<C64> {
        let h = self.spacing[axis];
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        for p in 0..f.len() {
            let mut s = C64::new(0.0, 0.0);
            for &(off, w) in order.d1() {
                s += f[self.shift(p, axis, off)] * w;
            }
            out[p] = s / h;
        }
        out
    }

    /// Holomorphic derivative ∂_α = (∂ₓ − i∂_y)/2 of a periodic field.
    pub fn del_holo(&self, f: &[C64], alpha: usize, order: StencilOrder) -> Vec<C64> {
        let dx = self.deriv_axis(f, 2 * alpha, order);
        let dy = self.deriv_axis(f, 2 * alpha + 1, order);
        dx.iter()
            .zip(&dy)
            .map(|(x, y)| 0.5 * (x - C64::new(0.0, 1.0) * y))
            .collect()
    }

    /// Antiholomorphic derivative ∂_ᾱ = (∂ₓ + i∂_y)/2.
    pub fn del_anti(&self, f: &[C64], alpha: usize, order: StencilOrder) -> Vec<C64> {
        let dx = self.deriv_axis(f, 2 * alpha, order);
        let dy = self.deriv_axis(f, 2 * alpha + 1, order);
        dx.iter()
            .zip(&dy)
            .map(|(x, y)| 0.5 * (x + C64::new(0.0, 1.0) * y))
            .collect()
    }
}
