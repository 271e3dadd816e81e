//! Discrete Fourier sums on arbitrary uniform grids.
//!
//! Everything here evaluates `S_k = sum_n v_n exp(sign * 2 pi i x_n y_k)` with
//! `x_n = x0 + n dx` and `y_k = y0 + k dy`. When `dx * dy * N == 1` and the
//! output has `N` points this is a plain FFT; otherwise a chirp-z transform
//! (Bluestein) is used.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized in-place FFT. `inverse` flips the exponent sign to `+`.
pub(crate) fn fft(buf: &mut [Complex64], inverse: bool) {
    if buf.is_empty() {
        return;
    }
    plan(buf.len(), inverse).process(buf);
}

/// `exp(i 2 pi frac)` with the argument reduced to `[-1/2, 1/2)` first.
#[inline]
pub(crate) fn cis_turns(turns: f64) -> Complex64 {
    let r = turns - turns.round();
    Complex64::from_polar(1.0, 2.0 * PI * r)
}

/// Smallest size that is a product of 2, 3 and 5 and at least `n`.
pub(crate) fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn grid_sum(
    v: &[Complex64],
    x0: f64,
    dx: f64,
    y0: f64,
    dy: f64,
    m: usize,
    sign: f64,
) -> Vec<Complex64> {
    let n = v.len();
    if n == 0 || m == 0 {
        return vec![Complex64::new(0.0, 0.0); m];
    }
    let prod = dx * dy * n as f64;
    if m == n && (prod.abs() - 1.0).abs() < 1e-12 {
        return plain(v, x0, dx, y0, dy, sign);
    }
    bluestein(v, x0, dx, y0, dy, m, sign)
}

fn plain(v: &[Complex64], x0: f64, dx: f64, y0: f64, dy: f64, sign: f64) -> Vec<Complex64> {
    // Here n k dx dy = +-n k / N, so the core sum is an FFT in one direction.
    let mut buf: Vec<Complex64> = v
        .iter()
        .enumerate()
        .map(|(i, &z)| z * cis_turns(sign * (i as f64) * dx * y0))
        .collect();
    fft(&mut buf, sign * (dx * dy) > 0.0);
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= cis_turns(sign * x0 * (y0 + k as f64 * dy));
    }
    buf
}

fn bluestein(
    v: &[Complex64],
    x0: f64,
    dx: f64,
    y0: f64,
    dy: f64,
    m: usize,
    sign: f64,
) -> Vec<Complex64> {
    let n = v.len();
    let c = dx * dy; // turns per unit n*k
    let l = good_size(n + m - 1);
    let chirp = |j: i64| cis_turns(sign * c * 0.5 * (j as f64) * (j as f64));

    let mut a = vec![Complex64::new(0.0, 0.0); l];
    for (i, &z) in v.iter().enumerate() {
        a[i] = z * cis_turns(sign * (i as f64) * dx * y0) * chirp(i as i64);
    }
    let mut h = vec![Complex64::new(0.0, 0.0); l];
    for j in 0..m as i64 {
        h[j as usize] = chirp(j).conj();
    }
    for j in 1..n as i64 {
        h[l - j as usize] = chirp(j).conj();
    }
    fft(&mut a, false);
    fft(&mut h, false);
    for (x, y) in a.iter_mut().zip(&h) {
        *x *= *y;
    }
    fft(&mut a, true);
    let scale = 1.0 / l as f64;
    (0..m)
        .map(|k| {
            let kk = k as i64;
            a[k] * scale * chirp(kk) * cis_turns(sign * x0 * (y0 + k as f64 * dy))
        })
        .collect()
}

/// Direct O(N M) evaluation, used as a test oracle.
#[cfg(test)]
pub(crate) fn grid_sum_direct(
    v: &[Complex64],
    x0: f64,
    dx: f64,
    y0: f64,
    dy: f64,
    m: usize,
    sign: f64,
) -> Vec<Complex64> {
    (0..m)
        .map(|k| {
            let y = y0 + k as f64 * dy;
            v.iter()
                .enumerate()
                .map(|(n, &z)| z * cis_turns(sign * (x0 + n as f64 * dx) * y))
                .sum()
        })
        .collect()
}
