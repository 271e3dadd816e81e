//! Wavelet and short-time Fourier voice transforms.
//!
//! The wavelet transform is evaluated per scale in the Fourier domain,
//! `W_psi f(b, a) = |a|^(1/2) int f^(w) conj(psi^(a w)) exp(2 pi i b w) dw`,
//! with `psi^(a w)` taken from the exact DTFT of the sampled wavelet.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::dft;
use crate::error::{CoorbitError, Result};
use crate::group_core::{GroupField, GroupKind, GroupQuadrature, HeisenbergPoint};
use crate::signal::SampledSignal;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// `|psi^(0)|` above this fraction of `max |psi^|` makes the wavelet inadmissible.
pub const DC_TOLERANCE: f64 = 1e-6;

/// Outcome of the admissibility test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Admissibility {
    Admissible { constant: f64 },
    NotAdmissible { dc_ratio: f64 },
}

impl Admissibility {
    pub fn constant(self) -> Result<f64> {
        match self {
            Admissibility::Admissible { constant } => Ok(constant),
            Admissibility::NotAdmissible { dc_ratio } => Err(CoorbitError::NotAdmissible { dc_ratio }),
        }
    }

    pub fn is_admissible(self) -> bool {
        matches!(self, Admissibility::Admissible { .. })
    }
}

fn dc_ratio(spec: &[Complex64], dc_bin: usize) -> f64 {
    let max = spec.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        0.0
    } else {
        spec[dc_bin].norm() / max
    }
}

/// `C_psi = (sum_{w != 0} |psi^(w)|^2 / |w| dw)^(1/2)` on the natural spectrum grid.
pub fn admissibility_constant(psi: &SampledSignal) -> Admissibility {
    let s = psi.fourier();
    let dc = psi.len() / 2;
    let r = dc_ratio(&s.values, dc);
    if r > DC_TOLERANCE {
        return Admissibility::NotAdmissible { dc_ratio: r };
    }
    let sum: f64 = (0..s.len())
        .filter(|&k| k != dc)
        .map(|k| s.values[k].norm_sqr() / s.freq(k).abs())
        .sum();
    Admissibility::Admissible { constant: (sum * s.dw).sqrt() }
}

/// `psi / C_psi`.
pub fn normalize_admissible(psi: &SampledSignal) -> Result<SampledSignal> {
    let c = admissibility_constant(psi).constant()?;
    if c == 0.0 {
        return Err(CoorbitError::Degenerate("admissibility constant is zero".into()));
    }
    Ok(psi.scaled(Complex64::new(1.0 / c, 0.0)))
}

/// The multiplier `psi^(w) / sqrt|w|`, DC bin set to zero. Its norm is `C_psi`.
pub fn duflo_moore_wavelet(psi: &SampledSignal) -> Result<SampledSignal> {
    let mut s = psi.fourier();
    let dc = psi.len() / 2;
    let r = dc_ratio(&s.values, dc);
    if r > DC_TOLERANCE {
        return Err(CoorbitError::NotAdmissible { dc_ratio: r });
    }
    for k in 0..s.len() {
        s.values[k] = if k == dc { ZERO } else { s.values[k] / s.freq(k).abs().sqrt() };
    }
    Ok(s.inverse())
}

fn affine_chart(quad: &GroupQuadrature) -> Result<&crate::group_core::AffineChart> {
    quad.affine()
        .ok_or_else(|| CoorbitError::GroupMismatch("wavelet transforms need an affine quadrature".into()))
}

fn tf_chart(quad: &GroupQuadrature) -> Result<&crate::group_core::TfChart> {
    quad.tf().ok_or_else(|| CoorbitError::GroupMismatch("STFT needs a time-frequency quadrature".into()))
}

/// Continuous wavelet transform sampled on the quadrature nodes.
pub fn cwt(f: &SampledSignal, psi: &SampledSignal, quad: &Arc<GroupQuadrature>) -> Result<GroupField> {
    f.check_grid(psi)?;
    let ch = affine_chart(quad)?;
    let fs = f.fourier();
    let n = f.len();
    let mut values = Vec::with_capacity(quad.len());
    for row in 0..ch.n_rows() {
        let a = ch.row_scale(row);
        let ps = psi.spectrum_on_grid(a * fs.w0, a * fs.dw, n);
        let g: Vec<Complex64> = fs.values.iter().zip(&ps).map(|(x, y)| x * y.conj()).collect();
        let w = dft::grid_sum(&g, fs.w0, fs.dw, ch.b_lo(), ch.db(), ch.n_b(), 1.0);
        let c = a.abs().sqrt() * fs.dw;
        values.extend(w.into_iter().map(|z| z * c));
    }
    GroupField::new(quad.clone(), values)
}

/// Inverse wavelet transform onto the wavelet's time grid:
/// `f^(w) = C^-2 sum_a |a|^(1/2) F_b[W(., a)](w) psi^(a w) du / |a|`.
pub fn icwt(w: &GroupField, psi: &SampledSignal) -> Result<SampledSignal> {
    let c = admissibility_constant(psi).constant()?;
    if c == 0.0 {
        return Err(CoorbitError::Degenerate("admissibility constant is zero".into()));
    }
    icwt_with_constant(w, psi, c)
}

/// As [`icwt`] with a caller-supplied admissibility constant.
pub fn icwt_with_constant(w: &GroupField, psi: &SampledSignal, c: f64) -> Result<SampledSignal> {
    let ch = affine_chart(w.quad())?;
    let n = psi.len();
    let mut acc = psi.zeros_like().fourier();
    let (w0, dw) = (acc.w0, acc.dw);
    for row in 0..ch.n_rows() {
        let vals = &w.values()[row * ch.n_b()..(row + 1) * ch.n_b()];
        if vals.iter().all(|z| *z == ZERO) {
            continue;
        }
        let a = ch.row_scale(row);
        let fb = dft::grid_sum(vals, ch.b_lo(), ch.db(), w0, dw, n, -1.0);
        let ps = psi.spectrum_on_grid(a * w0, a * dw, n);
        let k = ch.db() * a.abs().sqrt() * ch.du() / a.abs() / (c * c);
        for i in 0..n {
            acc.values[i] += fb[i] * ps[i] * k;
        }
    }
    Ok(acc.inverse())
}

/// `V_g f(x, w) = sum_t f(t) conj(g(t - x)) exp(-2 pi i t w) dt` on a plane quadrature.
pub fn stft(f: &SampledSignal, g: &SampledSignal, quad: &Arc<GroupQuadrature>) -> Result<GroupField> {
    f.check_grid(g)?;
    let ch = tf_chart(quad)?;
    let mut values = Vec::with_capacity(quad.len());
    for ix in 0..ch.nx() {
        let x = ch.x(ix);
        let h: Vec<Complex64> = (0..f.len())
            .map(|i| f.values()[i] * g.value_at(f.time(i) - x).conj())
            .collect();
        let v = dft::grid_sum(&h, f.t0(), f.dt(), ch.w0(), ch.dw(), ch.nw(), -1.0);
        values.extend(v.into_iter().map(|z| z * f.dt()));
    }
    GroupField::new(quad.clone(), values)
}

/// `f = |g|^-2 sum_{x, w} V(x, w) M_w T_x g dx dw` on the window's grid.
pub fn istft(v: &GroupField, g: &SampledSignal) -> Result<SampledSignal> {
    let ch = tf_chart(v.quad())?;
    let gn = g.l2_norm();
    if gn == 0.0 {
        return Err(CoorbitError::Degenerate("zero window".into()));
    }
    let n = g.len();
    let mut out = vec![ZERO; n];
    for ix in 0..ch.nx() {
        let row = &v.values()[ix * ch.nw()..(ix + 1) * ch.nw()];
        if row.iter().all(|z| *z == ZERO) {
            continue;
        }
        let x = ch.x(ix);
        let s = dft::grid_sum(row, ch.w0(), ch.dw(), g.t0(), g.dt(), n, 1.0);
        for i in 0..n {
            out[i] += s[i] * g.value_at(g.time(i) - x);
        }
    }
    let k = ch.dx() * ch.dw() / (gn * gn);
    g.with_values(out.into_iter().map(|z| z * k).collect())
}

/// `K = V_psi psi` on the quadrature (wavelet or STFT by chart type).
pub fn reproducing_kernel(psi: &SampledSignal, quad: &Arc<GroupQuadrature>) -> Result<GroupField> {
    match quad.kind() {
        GroupKind::Affine => {
            admissibility_constant(psi).constant()?;
            cwt(psi, psi, quad)
        }
        GroupKind::TfPlane => stft(psi, psi, quad),
    }
}

/// `<f, rho(x, w, tau) g>` with `rho(x, w, tau) g = tau exp(-pi i w x) M_w T_x g`.
pub fn schrodinger_coefficient(f: &SampledSignal, g: &SampledSignal, h: &HeisenbergPoint) -> Result<Complex64> {
    if h.dim() != 1 {
        return Err(CoorbitError::DimensionMismatch { left: 1, right: h.dim() });
    }
    let (x, w) = (h.x[0], h.omega[0]);
    let atom = g.translate(x).modulate(w).scaled(h.tau * dft::cis_turns(-0.5 * w * x));
    f.inner(&atom)
}
