//! Torus geometry: a constant Hermitian base metric, an optional conformal
//! factor, volume integration, Λ-contraction of (1,1)-forms, and a spectral
//! solver for √−1 Λ_ω ∂̄∂ u = f.
//!
//! The base Gram matrix g̃ is constant over the torus; variable geometry enters
//! through ω = e^φ ω̃.  That covers every experiment here and keeps the Poisson
//! operator exactly diagonal in Fourier space: since Λ_ω = e^{−φ} Λ_ω̃, the
//! equation transforms to the constant-coefficient one with right-hand side
//! e^φ f, solved in a single transform round trip.

use num_complex::Complex64 as C64;

use crate::constants::{ALGEBRAIC_TOL, SOLVABILITY_TOL_FACTOR};
use crate::fft::{fft_nd, wavenumber};
use crate::grid::Grid;
use crate::linalg;
use crate::{Error, Result};

pub type ScalarField = Vec<f64>;
pub type CScalarField = Vec<C64>;

/// (1,1)-form in Ω storage: the form is √−1 Σ M_{αβ} dz^α∧dz̄^β and `data`
/// holds M as n×n blocks per grid point.  Real forms have Hermitian M.
#[derive(Debug, Clone)]
pub struct Form11Field {
    pub n: usize,
    pub data: Vec<C64>,
}

impl Form11Field {
    pub fn zeros(n: usize, npoints: usize) -> Form11Field {
        Form11Field { n, data: vec![C64::new(0.0, 0.0); npoints * n * n] }
    }

    pub fn npoints(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn at(&self, p: usize) -> &[C64] {
        let nn = self.n * self.n;
        &self.data[p * nn..(p + 1) * nn]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [C64] {
        let nn = self.n * self.n;
        &mut self.data[p * nn..(p + 1) * nn]
    }

    /// sup over points of the Hermiticity defect; 0 for real forms.
    pub fn realness_defect(&self) -> f64 {
        (0..self.npoints())
            .map(|p| linalg::herm_defect(self.n, self.at(p)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct TorusGeometry {
    pub grid: Grid,
    base: Vec<C64>,
    base_inv: Vec<C64>,
    base_det: f64,
    conformal: Option<Vec<f64>>,
}

impl TorusGeometry {
    /// Standard flat metric g̃ = Id.
    pub fn flat(grid: Grid) -> TorusGeometry {
        let n = grid.n;
        TorusGeometry {
            grid,
            base: linalg::identity(n),
            base_inv: linalg::identity(n),
            base_det: 1.0,
            conformal: None,
        }
    }

    /// Constant Hermitian positive-definite base Gram matrix.
    pub fn with_base(grid: Grid, base: Vec<C64>) -> Result<TorusGeometry> {
        let n = grid.n;
        if base.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "base metric needs {}x{} entries",
                n, n
            )));
        }
        let scale = linalg::sup_entry(&base).max(1.0);
        if linalg::herm_defect(n, &base) > ALGEBRAIC_TOL * scale {
            return Err(Error::Config("base metric is not Hermitian".into()));
        }
        let (vals, _) = linalg::herm_eig(n, &base);
        if vals[0] <= 0.0 {
            return Err(Error::PositivityFloor {
                floor: 0.0,
                context: format!("base metric eigenvalue {}", vals[0]),
            });
        }
        let base_inv = linalg::inverse(n, &base)?;
        let base_det = linalg::det(n, &base).re;
        Ok(TorusGeometry { grid, base, base_inv, base_det, conformal: None })
    }

    /// Attach a conformal factor: ω = e^φ ω̃.
    pub fn with_conformal(mut self, phi: ScalarField) -> Result<TorusGeometry> {
        if phi.len() != self.grid.npoints() {
            return Err(Error::ShapeMismatch("conformal factor length".into()));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conformal factor".into()));
        }
        self.conformal = Some(phi);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn base_gram(&self) -> &[C64] {
        &self.base
    }

    pub fn base_inverse(&self) -> &[C64] {
        &self.base_inv
    }

    /// e^{φ(p)}, or 1 without a conformal factor.
    pub fn conf(&self, p: usize) -> f64 {
        match &self.conformal {
            Some(phi) => phi[p].exp(),
            None => 1.0,
        }
    }

    pub fn conformal_log(&self) -> Option<&[f64]> {
        self.conformal.as_deref()
    }

    /// Effective Gram matrix e^{φ(p)}·g̃.
    pub fn gram_at(&self, p: usize) -> Vec<C64> {
        let mut g = self.base.clone();
        let c = C64::new(self.conf(p), 0.0);
        linalg::scale(c, &mut g);
        g
    }

    /// ω in Ω storage.
    pub fn omega(&self) -> Form11Field {
        let n = self.n();
        let npts = self.grid.npoints();
        let mut f = Form11Field::zeros(n, npts);
        for p in 0..npts {
            f.at_mut(p).copy_from_slice(&self.gram_at(p));
        }
        f
    }

    /// Volume density of ω^n/n! against Lebesgue dx: 2ⁿ det(G_eff).
    pub fn vol_density(&self, p: usize) -> f64 {
        let n = self.n() as i32;
        (2.0f64).powi(n) * self.conf(p).powi(n) * self.base_det
    }

    pub fn volume(&self) -> f64 {
        let cell = self.grid.cell_volume();
        (0..self.grid.npoints()).map(|p| self.vol_density(p) * cell).sum()
    }

    /// ∫ f ω^n/n! for a real scalar field.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let cell = self.grid.cell_volume();
        (0..self.grid.npoints())
            .map(|p| f[p] * self.vol_density(p) * cell)
            .sum()
    }

    pub fn integrate_c(&self, f: &[C64]) -> C64 {
        let cell = self.grid.cell_volume();
        (0..self.grid.npoints())
            .map(|p| f[p] * C64::new(self.vol_density(p) * cell, 0.0))
            .sum()
    }

    /// Λ_ω of an Ω-stored form: tr(G_eff⁻¹ M) per point.  Applied to raw
    /// curvature storage this same contraction yields √−1 Λ_ω F.
    pub fn contract_lambda(&self, form: &Form11Field) -> CScalarField {
        assert_eq!(form.n, self.n(), "contract_lambda dimension");
        let n = self.n();
        (0..form.npoints())
            .map(|p| {
                let m = form.at(p);
                let mut s = C64::new(0.0, 0.0);
                for b in 0..n {
                    for a in 0..n {
                        s += self.base_inv[b * n + a] * m[a * n + b];
                    }
                }
                s / self.conf(p)
            })
            .collect()
    }

    /// Spectral symbol of √−1 Λ_ω̃ ∂̄∂ at Fourier bin `coords`; ≥ 0, zero only
    /// at the constant mode.
    fn symbol(&self, coords: &[usize]) -> f64 {
        let n = self.n();
        let mut sig = vec![C64::new(0.0, 0.0); n];
        for a in 0..n {
            let kx = wavenumber(coords[2 * a], self.grid.dims[2 * a], self.grid.periods[2 * a]);
            let ky = wavenumber(
                coords[2 * a + 1],
                self.grid.dims[2 * a + 1],
                self.grid.periods[2 * a + 1],
            );
            sig[a] = C64::new(ky / 2.0, kx / 2.0); // (i·kx + ky)/2
        }
        let mut q = C64::new(0.0, 0.0);
        for b in 0..n {
            for a in 0..n {
                q += self.base_inv[b * n + a] * sig[a] * sig[b].conj();
            }
        }
        q.re
    }

    /// Apply √−1 Λ_ω ∂̄∂ spectrally to a real field (test and oracle hook).
    pub fn poisson_apply(&self, u: &[f64]) -> ScalarField {
        let mut hat: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        fft_nd(&mut hat, &self.grid.dims, false);
        for p in 0..hat.len() {
            let c = self.grid.coords(p);
            hat[p] *= self.symbol(&c);
        }
        fft_nd(&mut hat, &self.grid.dims, true);
        (0..u.len()).map(|p| hat[p].re / self.conf(p)).collect()
    }

    /// Solve √−1 Λ_ω ∂̄∂ u = f for mean-zero u.  The compatibility condition
    /// is checked on the transformed right-hand side e^φ f (for flat ω this is
    /// ∫ f ω^n/n! = 0); default tolerance `SOLVABILITY_TOL_FACTOR`·Vol.
    pub fn poisson_solve(&self, f: &[f64], tol: Option<f64>) -> Result<ScalarField> {
        if f.len() != self.grid.npoints() {
            return Err(Error::ShapeMismatch("poisson rhs length".into()));
        }
        let cell = self.grid.cell_volume();
        let weight = (2.0f64).powi(self.n() as i32) * self.base_det * cell;
        let mut hat: Vec<C64> = (0..f.len())
            .map(|p| C64::new(f[p] * self.conf(p), 0.0))
            .collect();
        let mass: f64 = hat.iter().map(|v| v.re * weight).sum();
        let tol = tol.unwrap_or(SOLVABILITY_TOL_FACTOR * self.volume());
        if !mass.is_finite() {
            return Err(Error::NonFinite("poisson rhs".into()));
        }
        if mass.abs() > tol {
            return Err(Error::Solvability(format!(
                "∫ (transformed rhs) = {mass:.3e} exceeds tolerance {tol:.3e}"
            )));
        }
        fft_nd(&mut hat, &self.grid.dims, false);
        for p in 0..hat.len() {
            let c = self.grid.coords(p);
            let q = self.symbol(&c);
            if q == 0.0 {
                hat[p] = C64::new(0.0, 0.0);
            } else {
                hat[p] /= q;
            }
        }
        fft_nd(&mut hat, &self.grid.dims, true);
        Ok(hat.iter().map(|v| v.re).collect())
    }

    /// sup |∂∂̄ (ω^{n−1})|.  Identically zero for n = 1; for n = 2 this is the
    /// Gauduchon defect of ω, the scalar T in ∂∂̄ω = √−1·T·dz¹∧dz²∧dz̄¹∧dz̄².
    pub fn gauduchon_defect(&self) -> f64 {
        match self.n() {
            1 => 0.0,
            2 => self.ddbar_omega_sup(),
            _ => unreachable!(),
        }
    }

    /// sup |∂∂̄ (ω^{n−2})|; vacuously zero for n ≤ 2 since ω⁰ = 1.  Kept as an
    /// explicit diagnostic so higher-codimension Chern integrals can state
    /// their hypothesis.
    pub fn astheno_defect(&self) -> f64 {
        0.0
    }

    fn ddbar_omega_sup(&self) -> f64 {
        let omega = self.omega();
        let grid = &self.grid;
        let order = grid.stencil_order();
        let npts = grid.npoints();
        // component fields M_{γδ}
        let comp = |g: usize, d: usize| -> Vec<C64> {
            (0..npts).map(|p| omega.at(p)[g * 2 + d]).collect()
        };
        let mut sup = 0.0f64;
        // T = −(∂₁∂₁̄M₂₂ − ∂₁∂₂̄M₂₁ − ∂₂∂₁̄M₁₂ + ∂₂∂₂̄M₁₁)
        let terms: [(usize, usize, usize, usize, f64); 4] = [
            (0, 0, 1, 1, -1.0),
            (0, 1, 1, 0, 1.0),
            (1, 0, 0, 1, 1.0),
            (1, 1, 0, 0, -1.0),
        ];
        let mut t = vec![C64::new(0.0, 0.0); npts];
        for (a, b, g, d, sign) in terms {
            let m = comp(g, d);
            let dm = grid.del_anti(&m, b, order);
            let ddm = grid.del_holo(&dm, a, order);
            for p in 0..npts {
                t[p] += ddm[p] * sign;
            }
        }
        for v in &t {
            sup = sup.max(v.norm());
        }
        sup
    }
}
