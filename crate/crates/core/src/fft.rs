//! Thin n-dimensional wrapper around `rustfft`.  Forward transforms are
//! unnormalized; the inverse divides by the total point count, so
//! forward-then-inverse is the identity.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

/// In-place FFT along every axis of a row-major array (axis 0 slowest).
pub fn fft_nd(data: &mut [C64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total, "fft_nd shape mismatch");
    let mut planner = FftPlanner::new();
    for axis in 0..dims.len() {
        let d = dims[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(d)
        } else {
            planner.plan_fft_forward(d)
        };
        let stride: usize = dims[axis + 1..].iter().product();
        let block = stride * d;
        let mut line = vec![C64::new(0.0, 0.0); d];
        for base in (0..total).step_by(block) {
            for rest in 0..stride {
                for i in 0..d {
                    line[i] = data[base + i * stride + rest];
                }
                fft.process(&mut line);
                for i in 0..d {
                    data[base + i * stride + rest] = line[i];
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Signed integer frequency for bin k of an axis with `dim` points.
pub fn signed_freq(k: usize, dim: usize) -> isize {
    if k <= dim / 2 {
        k as isize
    } else {
        k as isize - dim as isize
    }
}

/// Continuous wavenumber 2π·k̂/L for bin k.
pub fn wavenumber(k: usize, dim: usize, period: f64) -> f64 {
    std::f64::consts::TAU * signed_freq(k, dim) as f64 / period
}
