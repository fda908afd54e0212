//! Dense kernels for small complex matrices (bundle rank r ≤ 8, metric
//! dimension n ≤ 2).  Row-major storage, `a[i*n + j]` is the (i,j) entry,
//! matrices act on column vectors.  Everything takes slices so hot loops can
//! reuse buffers.

use num_complex::Complex64 as C64;

use crate::constants::POSITIVITY_FLOOR;
use crate::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> Vec<C64> {
    let mut m = vec![ZERO; n * n];
    for i in 0..n {
        m[i * n + i] = ONE;
    }
    m
}

pub fn mul_into(n: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
    debug_assert!(a.len() == n * n && b.len() == n * n && out.len() == n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

pub fn mul(n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    mul_into(n, a, b, &mut out);
    out
}

pub fn mul3(n: usize, a: &[C64], b: &[C64], c: &[C64]) -> Vec<C64> {
    mul(n, &mul(n, a, b), c)
}

pub fn adjoint_into(n: usize, a: &[C64], out: &mut [C64]) {
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j].conj();
        }
    }
}

pub fn adjoint(n: usize, a: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    adjoint_into(n, a, &mut out);
    out
}

/// out += c * a
pub fn axpy(c: C64, a: &[C64], out: &mut [C64]) {
    for (o, v) in out.iter_mut().zip(a) {
        *o += c * *v;
    }
}

pub fn scale(c: C64, a: &mut [C64]) {
    for v in a.iter_mut() {
        *v *= c;
    }
}

pub fn trace(n: usize, a: &[C64]) -> C64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

pub fn commutator(n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut ab = mul(n, a, b);
    let ba = mul(n, b, a);
    for (x, y) in ab.iter_mut().zip(&ba) {
        *x -= *y;
    }
    ab
}

/// Hermitian part (a + a†)/2.
pub fn herm_part(n: usize, a: &[C64]) -> Vec<C64> {
    let mut out = adjoint(n, a);
    for (o, v) in out.iter_mut().zip(a) {
        *o = (*o + *v) * 0.5;
    }
    out
}

/// max |a_ij|
pub fn sup_entry(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn frobenius(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// max |(a − a†)_ij|, the Hermiticity defect.
pub fn herm_defect(n: usize, a: &[C64]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            d = d.max((a[i * n + j] - a[j * n + i].conj()).norm());
        }
    }
    d
}

/// Gauss–Jordan inverse with partial pivoting; fine at these sizes.
pub fn inverse(n: usize, a: &[C64]) -> Result<Vec<C64>> {
    let mut m = a.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let (mut piv, mut best) = (col, m[col * n + col].norm());
        for row in col + 1..n {
            let v = m[row * n + col].norm();
            if v > best {
                piv = row;
                best = v;
            }
        }
        if best == 0.0 {
            return Err(Error::ShapeMismatch(format!("singular {n}x{n} matrix")));
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
                inv.swap(col * n + j, piv * n + j);
            }
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == ZERO {
                continue;
            }
            for j in 0..n {
                let (mc, ic) = (m[col * n + j], inv[col * n + j]);
                m[row * n + j] -= f * mc;
                inv[row * n + j] -= f * ic;
            }
        }
    }
    Ok(inv)
}

pub fn det(n: usize, a: &[C64]) -> C64 {
    let mut m = a.to_vec();
    let mut d = ONE;
    for col in 0..n {
        let (mut piv, mut best) = (col, m[col * n + col].norm());
        for row in col + 1..n {
            let v = m[row * n + col].norm();
            if v > best {
                piv = row;
                best = v;
            }
        }
        if best == 0.0 {
            return ZERO;
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            d = -d;
        }
        let p = m[col * n + col];
        d *= p;
        for row in col + 1..n {
            let f = m[row * n + col] / p;
            for j in col..n {
                let v = m[col * n + j];
                m[row * n + j] -= f * v;
            }
        }
    }
    d
}

/// Lower-triangular L with a = L·L†.  `context` feeds the error message.
pub fn cholesky(n: usize, a: &[C64], context: &str) -> Result<Vec<C64>> {
    let scale = (0..n)
        .map(|i| a[i * n + i].re.abs())
        .fold(1.0f64, f64::max);
    let floor = POSITIVITY_FLOOR * scale;
    let mut l = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            if i == j {
                if s.re <= floor {
                    return Err(Error::PositivityFloor {
                        floor: POSITIVITY_FLOOR,
                        context: format!("{context}: pivot {} at row {i}", s.re),
                    });
                }
                l[i * n + i] = C64::new(s.re.sqrt(), 0.0);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_tri_inverse(n: usize, l: &[C64]) -> Vec<C64> {
    let mut inv = vec![ZERO; n * n];
    for i in 0..n {
        inv[i * n + i] = ONE / l[i * n + i];
        for j in (0..i).rev() {
            let mut s = ZERO;
            for k in j..i {
                s += l[i * n + k] * inv[k * n + j];
            }
            inv[i * n + j] = -s / l[i * n + i];
        }
    }
    inv
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and a
/// unitary whose columns are the eigenvectors (a = U diag(λ) U†).  The input
/// is symmetrized first; each eigenvector's largest-modulus component is made
/// real positive so results are deterministic.
pub fn herm_eig(n: usize, a: &[C64]) -> (Vec<f64>, Vec<C64>) {
    let a = herm_part(n, a);
    match n {
        0 => (vec![], vec![]),
        1 => (vec![a[0].re], vec![ONE]),
        2 => herm_eig_2(&a),
        _ => herm_eig_jacobi(n, &a),
    }
}

fn herm_eig_2(a: &[C64]) -> (Vec<f64>, Vec<C64>) {
    let (p, q, c) = (a[0].re, a[3].re, a[1]);
    let m = 0.5 * (p + q);
    let d = 0.5 * (p - q);
    let r = (d * d + c.norm_sqr()).sqrt();
    let cn = c.norm();
    let tiny = 1e-300 + 1e-16 * (p.abs() + q.abs());
    let mut vals = vec![m - r, m + r];
    let mut vecs;
    if cn <= tiny {
        vecs = identity(2);
        if p > q {
            vecs = vec![ZERO, ONE, ONE, ZERO];
        }
        vals = vec![p.min(q), p.max(q)];
    } else {
        // Pick the eigenvector formula by the sign of d: u = |d| + r never
        // cancels, whereas hi − p (resp. hi − q) loses every digit on a
        // nearly diagonal input and the noise pollutes the small component.
        let u = d.abs() + r;
        let nrm = (u * u + cn * cn).sqrt();
        let uc = C64::new(u / nrm, 0.0);
        vecs = if d >= 0.0 {
            // columns (lo, hi) = ((−c, u), (u, c̄))/nrm
            vec![-c / nrm, uc, uc, c.conj() / nrm]
        } else {
            // columns (lo, hi) = ((−u, c̄), (c, u))/nrm
            vec![-uc, c / nrm, c.conj() / nrm, uc]
        };
    }
    fix_phases(2, &mut vecs);
    (vals, vecs)
}

fn herm_eig_jacobi(n: usize, a: &[C64]) -> (Vec<f64>, Vec<C64>) {
    let mut m = a.to_vec();
    let mut u = identity(n);
    let scale = sup_entry(&m).max(1e-300);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[p * n + q].norm());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p * n + q].norm() <= 1e-18 * scale {
                    continue;
                }
                let block = [m[p * n + p], m[p * n + q], m[q * n + p], m[q * n + q]];
                let (_, v2) = herm_eig_2(&block);
                // rows/cols p,q of m ← V2† m V2; columns of u ← u V2
                rotate(n, &mut m, p, q, &v2);
                apply_right(n, &mut u, p, q, &v2);
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let vals_raw: Vec<f64> = (0..n).map(|i| m[i * n + i].re).collect();
    idx.sort_by(|&i, &j| vals_raw[i].partial_cmp(&vals_raw[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| vals_raw[i]).collect();
    let mut vecs = vec![ZERO; n * n];
    for (new, &old) in idx.iter().enumerate() {
        for row in 0..n {
            vecs[row * n + new] = u[row * n + old];
        }
    }
    fix_phases(n, &mut vecs);
    (vals, vecs)
}

/// m ← V2† m V2 acting on the (p,q) plane.
fn rotate(n: usize, m: &mut [C64], p: usize, q: usize, v2: &[C64]) {
    // columns first: for every row i, (m_ip, m_iq) ← (m_ip, m_iq)·V2
    for i in 0..n {
        let (x, y) = (m[i * n + p], m[i * n + q]);
        m[i * n + p] = x * v2[0] + y * v2[2];
        m[i * n + q] = x * v2[1] + y * v2[3];
    }
    for j in 0..n {
        let (x, y) = (m[p * n + j], m[q * n + j]);
        m[p * n + j] = v2[0].conj() * x + v2[2].conj() * y;
        m[q * n + j] = v2[1].conj() * x + v2[3].conj() * y;
    }
}

fn apply_right(n: usize, u: &mut [C64], p: usize, q: usize, v2: &[C64]) {
    for i in 0..n {
        let (x, y) = (u[i * n + p], u[i * n + q]);
        u[i * n + p] = x * v2[0] + y * v2[2];
        u[i * n + q] = x * v2[1] + y * v2[3];
    }
}

fn fix_phases(n: usize, vecs: &mut [C64]) {
    for col in 0..n {
        let (mut best, mut bv) = (0usize, 0.0f64);
        for row in 0..n {
            let v = vecs[row * n + col].norm();
            if v > bv + 1e-14 {
                best = row;
                bv = v;
            }
        }
        let c = vecs[best * n + col];
        if bv > 0.0 {
            let ph = c.conj() / bv;
            for row in 0..n {
                vecs[row * n + col] *= ph;
            }
        }
    }
}

/// f(a) for Hermitian a via the eigen-decomposition.
pub fn herm_fun(n: usize, a: &[C64], f: impl Fn(f64) -> f64) -> Vec<C64> {
    let (vals, u) = herm_eig(n, a);
    let mut fd = vec![ZERO; n * n];
    for i in 0..n {
        fd[i * n + i] = C64::new(f(vals[i]), 0.0);
    }
    let ufd = mul(n, &u, &fd);
    mul(n, &ufd, &adjoint(n, &u))
}
