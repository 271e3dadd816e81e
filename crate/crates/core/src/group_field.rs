//! Norms, convolution, involutions and oscillation for fields on a chart.
//!
//! Out-of-chart reads count as zero everywhere in this module. Convolution
//! results carry the fraction of kernel evaluations that landed inside the
//! chart and a crude bound on what the truncation dropped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft::{fft, good_size};
use crate::error::{invalid, CoorbitError, Result};
use crate::group_core::{AffineChart, GroupField, GroupKind, GroupPoint, GroupQuadrature, TfChart};
use crate::weights::{check_exponent, conjugate_exponent, is_p_control, WeightSpec};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Default number of sample offsets per axis for the oscillation sup.
pub const DEFAULT_DENSITY: usize = 7;

/// Allowance for quadrature and interpolation error in [`young_check`].
pub const YOUNG_SLACK: f64 = 0.05;

/// A compact neighbourhood of the identity, sampled on a tensor grid.
///
/// `Affine` is `[-beta/2, beta/2] x [alpha^-1/2, alpha^1/2]` on the positive
/// branch; `Tf` is the box `[-beta_x/2, beta_x/2] x [-beta_w/2, beta_w/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case", deny_unknown_fields)]
pub enum NeighborhoodSpec {
    Affine {
        beta: f64,
        alpha: f64,
        #[serde(default = "default_density")]
        density: usize,
    },
    Tf {
        beta_x: f64,
        beta_w: f64,
        #[serde(default = "default_density")]
        density: usize,
    },
}

fn default_density() -> usize {
    DEFAULT_DENSITY
}

impl NeighborhoodSpec {
    pub fn affine(beta: f64, alpha: f64) -> Result<Self> {
        let u = NeighborhoodSpec::Affine { beta, alpha, density: DEFAULT_DENSITY };
        u.validate()?;
        Ok(u)
    }

    pub fn tf(beta_x: f64, beta_w: f64) -> Result<Self> {
        let u = NeighborhoodSpec::Tf { beta_x, beta_w, density: DEFAULT_DENSITY };
        u.validate()?;
        Ok(u)
    }

    pub fn with_density(self, n: usize) -> Result<Self> {
        let u = match self {
            NeighborhoodSpec::Affine { beta, alpha, .. } => NeighborhoodSpec::Affine { beta, alpha, density: n },
            NeighborhoodSpec::Tf { beta_x, beta_w, .. } => NeighborhoodSpec::Tf { beta_x, beta_w, density: n },
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NeighborhoodSpec::Affine { beta, alpha, density } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(invalid(format!("beta must be positive, got {beta}")));
                }
                if !(alpha > 1.0 && alpha.is_finite()) {
                    return Err(invalid(format!("alpha must exceed 1, got {alpha}")));
                }
                check_density(density)
            }
            NeighborhoodSpec::Tf { beta_x, beta_w, density } => {
                for v in [beta_x, beta_w] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(invalid(format!("box side must be positive, got {v}")));
                    }
                }
                check_density(density)
            }
        }
    }

    pub fn group(&self) -> GroupKind {
        match self {
            NeighborhoodSpec::Affine { .. } => GroupKind::Affine,
            NeighborhoodSpec::Tf { .. } => GroupKind::TfPlane,
        }
    }

    pub fn density(&self) -> usize {
        match *self {
            NeighborhoodSpec::Affine { density, .. } | NeighborhoodSpec::Tf { density, .. } => density,
        }
    }

    /// Haar measure of the set: `beta (alpha^1/2 - alpha^-1/2)` for the
    /// rectangle, the area for the box.
    pub fn haar_mass(&self) -> f64 {
        match *self {
            NeighborhoodSpec::Affine { beta, alpha, .. } => beta * (alpha.sqrt() - 1.0 / alpha.sqrt()),
            NeighborhoodSpec::Tf { beta_x, beta_w, .. } => beta_x * beta_w,
        }
    }

    pub fn contains(&self, p: &GroupPoint) -> bool {
        let tol = 1e-12;
        match (*self, p) {
            (NeighborhoodSpec::Affine { beta, alpha, .. }, GroupPoint::Affine(q)) => {
                q.b.abs() <= beta / 2.0 + tol
                    && q.a >= alpha.powf(-0.5) * (1.0 - tol)
                    && q.a <= alpha.sqrt() * (1.0 + tol)
            }
            (NeighborhoodSpec::Tf { beta_x, beta_w, .. }, GroupPoint::TfPlane(q)) => {
                q.x.abs() <= beta_x / 2.0 + tol && q.omega.abs() <= beta_w / 2.0 + tol
            }
            _ => false,
        }
    }

    /// Tensor grid of `density^2` points with both ends of each axis
    /// included; the scale axis is uniform in `ln a`.
    pub fn samples(&self) -> Vec<GroupPoint> {
        let n = self.density();
        let ts = unit_grid(n);
        let mut out = Vec::with_capacity(n * n);
        match *self {
            NeighborhoodSpec::Affine { beta, alpha, .. } => {
                let la = alpha.ln();
                for &s in &ts {
                    for &t in &ts {
                        out.push(GroupPoint::affine(beta * t, (la * s).exp()));
                    }
                }
            }
            NeighborhoodSpec::Tf { beta_x, beta_w, .. } => {
                for &s in &ts {
                    for &t in &ts {
                        out.push(GroupPoint::tf(beta_x * s, beta_w * t));
                    }
                }
            }
        }
        out
    }
}

fn check_density(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("sampling density must be at least 1"));
    }
    Ok(())
}

/// `n` points on `[-1/2, 1/2]`; `[0]` for `n == 1`.
fn unit_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| k as f64 / (n - 1) as f64 - 0.5).collect()
}

/// Which involution to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Involution {
    /// `F(x^-1)`
    Check,
    /// `conj F(x^-1)`
    Nabla,
}

fn check_weight_group(f: &GroupField, m: &WeightSpec) -> Result<()> {
    if m.group() != f.quad().kind() {
        return Err(CoorbitError::GroupMismatch(format!(
            "weight lives on {:?}, field on {:?}",
            m.group(),
            f.quad().kind()
        )));
    }
    Ok(())
}

/// Weighted `L^p` norm; `p = f64::INFINITY` gives the grid max of `|F| m`.
pub fn lpm_norm(f: &GroupField, p: f64, m: &WeightSpec) -> Result<f64> {
    check_exponent(p)?;
    check_weight_group(f, m)?;
    let mv = m.on_nodes(f.quad())?;
    Ok(lp_from_nodes(f, p, &mv))
}

fn lp_from_nodes(f: &GroupField, p: f64, mv: &[f64]) -> f64 {
    let q = f.quad();
    if p.is_infinite() {
        return f.values().iter().zip(mv).map(|(z, m)| z.norm() * m).fold(0.0, f64::max);
    }
    let s: f64 = f
        .values()
        .iter()
        .zip(mv)
        .enumerate()
        .map(|(i, (z, m))| (z.norm() * m).powf(p) * q.weight(i))
        .sum();
    s.powf(1.0 / p)
}

pub fn involute(f: &GroupField, kind: Involution) -> GroupField {
    let q = f.quad().clone();
    let mut inside = 0usize;
    let values: Vec<Complex64> = (0..q.len())
        .map(|i| match q.interpolate(f.values(), &q.point(i).inv()) {
            Some(z) => {
                inside += 1;
                match kind {
                    Involution::Check => z,
                    Involution::Nabla => z.conj(),
                }
            }
            None => ZERO,
        })
        .collect();
    let n = values.len().max(1);
    let mut g = GroupField::new(q, values).expect("length preserved");
    g.coverage = inside as f64 / n as f64;
    g
}

/// `(F * G)(x) = sum_y F(y) G(y^-1 x) mu(y)` over the chart nodes.
pub fn convolve(f: &GroupField, g: &GroupField) -> Result<GroupField> {
    f.check_same(g)?;
    match &**f.quad() {
        GroupQuadrature::Affine(c) => affine_convolve(f, g, c),
        GroupQuadrature::TfPlane(_) => tf_convolve(f, g),
    }
}

/// Kernel projection `F -> F * K`.
pub fn project(f: &GroupField, kernel: &GroupField) -> Result<GroupField> {
    convolve(f, kernel)
}

/// Node-by-node double sum with generic chart interpolation. Quadratic in
/// the node count; meant as an oracle for [`convolve`] on small charts.
pub fn convolve_direct(f: &GroupField, g: &GroupField) -> Result<GroupField> {
    f.check_same(g)?;
    let q = f.quad().clone();
    let n = q.len();
    let pts: Vec<GroupPoint> = (0..n).map(|i| q.point(i)).collect();
    let mut inside = 0usize;
    let mut out = vec![ZERO; n];
    for (ix, x) in pts.iter().enumerate() {
        let mut acc = ZERO;
        for (iy, y) in pts.iter().enumerate() {
            let p = y.inv().mul(x)?;
            if let Some(v) = q.interpolate(g.values(), &p) {
                inside += 1;
                let fy = f.values()[iy];
                if fy != ZERO {
                    acc += fy * v * q.weight(iy);
                }
            }
        }
        out[ix] = acc;
    }
    let mut h = GroupField::new(q, out)?;
    h.coverage = inside as f64 / (n * n).max(1) as f64;
    h.tail_bound = tail_bound(f, g, h.coverage);
    Ok(h)
}

fn tail_bound(f: &GroupField, g: &GroupField, coverage: f64) -> f64 {
    let l1: f64 = f.values().iter().enumerate().map(|(i, z)| z.norm() * f.quad().weight(i)).sum();
    (1.0 - coverage).max(0.0) * l1 * edge_max(g)
}

/// Largest `|G|` on the boundary nodes of the chart.
fn edge_max(g: &GroupField) -> f64 {
    let v = g.values();
    let mut m = 0.0f64;
    match &**g.quad() {
        GroupQuadrature::Affine(c) => {
            let nb = c.n_b();
            for (br, _) in c.signs().iter().enumerate() {
                for iu in 0..c.n_scales() {
                    let edge_row = iu == 0 || iu + 1 == c.n_scales();
                    for ib in 0..nb {
                        if edge_row || ib == 0 || ib + 1 == nb {
                            m = m.max(v[c.index(br, iu, ib)].norm());
                        }
                    }
                }
            }
        }
        GroupQuadrature::TfPlane(c) => {
            for ix in 0..c.nx() {
                for iw in 0..c.nw() {
                    if ix == 0 || iw == 0 || ix + 1 == c.nx() || iw + 1 == c.nw() {
                        m = m.max(v[c.index(ix, iw)].norm());
                    }
                }
            }
        }
    }
    m
}

fn affine_convolve(f: &GroupField, g: &GroupField, c: &AffineChart) -> Result<GroupField> {
    let nb = c.n_b();
    let rows = c.n_rows();
    let l = good_size(2 * nb - 1);
    let fv = f.values();
    let gv = g.values();
    let row_zero = |v: &[Complex64], r: usize| v[r * nb..(r + 1) * nb].iter().all(|z| *z == ZERO);
    let g_zero: Vec<bool> = (0..rows).map(|r| row_zero(gv, r)).collect();

    // Spectra of the zero-padded source rows, pre-multiplied by the row weight.
    let f_hat: Vec<Option<Vec<Complex64>>> = (0..rows)
        .map(|r| {
            if row_zero(fv, r) {
                return None;
            }
            let mu = c.row_weight(r);
            let mut buf = vec![ZERO; l];
            for (k, z) in fv[r * nb..(r + 1) * nb].iter().enumerate() {
                buf[k] = z * mu;
            }
            fft(&mut buf, false);
            Some(buf)
        })
        .collect();

    // Number of (m, n) pairs with m - n = d is nb - |d|.
    let mut inside = 0u128;
    let mut out = vec![ZERO; rows * nb];
    let mut h = vec![ZERO; l];
    let mut acc = vec![ZERO; l];
    for r in 0..rows {
        let a = c.row_scale(r);
        acc.iter_mut().for_each(|z| *z = ZERO);
        let mut any = false;
        for (rp, fh) in f_hat.iter().enumerate() {
            let ap = c.row_scale(rp);
            let Some((branch, fu)) = c.locate_scale(a / ap) else {
                continue;
            };
            let (iu, tu) = split_pos(fu, c.n_scales());
            let g0 = c.index(branch, iu, 0) / nb;
            let g1 = if tu > 0.0 { Some(g0 + 1) } else { None };
            let zero_kernel = g_zero[g0] && g1.map_or(true, |r1| g_zero[r1]);
            h.iter_mut().for_each(|z| *z = ZERO);
            for d in -(nb as i64 - 1)..nb as i64 {
                let Some(fb) = c.locate_b(d as f64 * c.db() / ap) else {
                    continue;
                };
                inside += (nb as u128) - d.unsigned_abs() as u128;
                if zero_kernel || fh.is_none() {
                    continue;
                }
                let (ib, tb) = split_pos(fb, nb);
                let row_val = |gr: usize| {
                    let base = gr * nb;
                    let mut z = gv[base + ib] * (1.0 - tb);
                    if tb > 0.0 {
                        z += gv[base + ib + 1] * tb;
                    }
                    z
                };
                let mut z = row_val(g0) * (1.0 - tu);
                if let Some(r1) = g1 {
                    z += row_val(r1) * tu;
                }
                h[d.rem_euclid(l as i64) as usize] = z;
            }
            let Some(fh) = fh else { continue };
            if zero_kernel {
                continue;
            }
            fft(&mut h, false);
            for ((s, x), y) in acc.iter_mut().zip(fh).zip(&h) {
                *s += x * y;
            }
            any = true;
        }
        if any {
            fft(&mut acc, true);
            let inv_l = 1.0 / l as f64;
            for (m, z) in out[r * nb..(r + 1) * nb].iter_mut().enumerate() {
                *z = acc[m] * inv_l;
            }
        }
    }
    let mut res = f.with_values(out)?;
    let total = (rows as u128 * nb as u128).pow(2).max(1);
    res.coverage = inside as f64 / total as f64;
    res.tail_bound = tail_bound(f, g, res.coverage);
    Ok(res)
}

fn split_pos(f: f64, n: usize) -> (usize, f64) {
    let i = (f.floor() as usize).min(n - 1);
    if i == n - 1 {
        (i, 0.0)
    } else {
        (i, f - i as f64)
    }
}

/// Convolution on the time-frequency plane, which is abelian: a 2-D linear
/// convolution scaled by `dx dw`. The kernel is read at the lag vectors
/// `(dx_lag, dw_lag)` by chart interpolation, so grids not anchored at the
/// origin are handled the same way as by [`convolve_direct`].
pub fn tf_convolve(f: &GroupField, g: &GroupField) -> Result<GroupField> {
    f.check_same(g)?;
    let c = f
        .quad()
        .tf()
        .ok_or_else(|| CoorbitError::GroupMismatch("tf_convolve needs a time-frequency chart".into()))?
        .clone();
    let (nx, nw) = (c.nx(), c.nw());
    let (lx, lw) = (good_size(2 * nx - 1), good_size(2 * nw - 1));
    let mut fa = vec![ZERO; lx * lw];
    for ix in 0..nx {
        for iw in 0..nw {
            fa[ix * lw + iw] = f.values()[c.index(ix, iw)];
        }
    }
    let mut ha = vec![ZERO; lx * lw];
    let mut inside = 0u128;
    for dx in -(nx as i64 - 1)..nx as i64 {
        for dw in -(nw as i64 - 1)..nw as i64 {
            let v = c.interpolate(g.values(), dx as f64 * c.dx(), dw as f64 * c.dw());
            if let Some(z) = v {
                inside += (nx as u128 - dx.unsigned_abs() as u128) * (nw as u128 - dw.unsigned_abs() as u128);
                let i = dx.rem_euclid(lx as i64) as usize;
                let j = dw.rem_euclid(lw as i64) as usize;
                ha[i * lw + j] = z;
            }
        }
    }
    fft2(&mut fa, lx, lw, false);
    fft2(&mut ha, lx, lw, false);
    for (x, y) in fa.iter_mut().zip(&ha) {
        *x *= y;
    }
    fft2(&mut fa, lx, lw, true);
    let s = c.dx() * c.dw() / (lx * lw) as f64;
    let mut out = vec![ZERO; nx * nw];
    for ix in 0..nx {
        for iw in 0..nw {
            out[c.index(ix, iw)] = fa[ix * lw + iw] * s;
        }
    }
    let mut res = f.with_values(out)?;
    res.coverage = inside as f64 / ((nx * nw) as u128).pow(2).max(1) as f64;
    res.tail_bound = tail_bound(f, g, res.coverage);
    Ok(res)
}

fn fft2(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    for r in buf.chunks_mut(cols) {
        fft(r, inverse);
    }
    let mut col = vec![ZERO; rows];
    for j in 0..cols {
        for i in 0..rows {
            col[i] = buf[i * cols + j];
        }
        fft(&mut col, inverse);
        for i in 0..rows {
            buf[i * cols + j] = col[i];
        }
    }
}

/// `osc_U(G)(x) = max_u |G(u x) - G(x)|` over the sample points of `U`.
pub fn oscillation(g: &GroupField, u: &NeighborhoodSpec) -> Result<GroupField> {
    u.validate()?;
    let q = g.quad().clone();
    if u.group() != q.kind() {
        return Err(CoorbitError::GroupMismatch(format!(
            "neighbourhood lives on {:?}, field on {:?}",
            u.group(),
            q.kind()
        )));
    }
    let samples = u.samples();
    let v = g.values();
    let out: Vec<Complex64> = match &*q {
        GroupQuadrature::Affine(c) => affine_osc(c, v, &samples),
        GroupQuadrature::TfPlane(c) => tf_osc(c, v, &samples),
    };
    GroupField::new(q, out)
}

fn affine_osc(c: &AffineChart, v: &[Complex64], samples: &[GroupPoint]) -> Vec<Complex64> {
    let nb = c.n_b();
    let us: Vec<(f64, f64)> = samples
        .iter()
        .map(|p| {
            let a = p.as_affine().expect("affine sample");
            (a.b, a.a)
        })
        .collect();
    let mut out = vec![ZERO; v.len()];
    for r in 0..c.n_rows() {
        let a = c.row_scale(r);
        for ib in 0..nb {
            let b = c.b(ib);
            let here = v[r * nb + ib];
            let mut best = 0.0f64;
            for &(ub, ua) in &us {
                let there = c.interpolate(v, ub + ua * b, ua * a).unwrap_or(ZERO);
                best = best.max((there - here).norm());
            }
            out[r * nb + ib] = Complex64::new(best, 0.0);
        }
    }
    out
}

fn tf_osc(c: &TfChart, v: &[Complex64], samples: &[GroupPoint]) -> Vec<Complex64> {
    let us: Vec<(f64, f64)> = samples
        .iter()
        .map(|p| {
            let t = p.as_tf().expect("tf sample");
            (t.x, t.omega)
        })
        .collect();
    let mut out = vec![ZERO; v.len()];
    for ix in 0..c.nx() {
        for iw in 0..c.nw() {
            let (x, w) = (c.x(ix), c.w(iw));
            let here = v[c.index(ix, iw)];
            let mut best = 0.0f64;
            for &(ux, uw) in &us {
                let there = c.interpolate(v, x + ux, w + uw).unwrap_or(ZERO);
                best = best.max((there - here).norm());
            }
            out[c.index(ix, iw)] = Complex64::new(best, 0.0);
        }
    }
    out
}

/// One side-by-side comparison `lhs <= rhs (1 + slack)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

impl InequalityCheck {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        let pass = lhs <= rhs * (1.0 + YOUNG_SLACK) || lhs == 0.0;
        InequalityCheck { name: name.into(), lhs, rhs, slack: YOUNG_SLACK, pass }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungReport {
    pub checks: Vec<InequalityCheck>,
    pub pass: bool,
}

/// Evaluates both sides of the four Young-type inequalities for `F`, `G`:
///
/// * `algebra`: `|F * G|_{1,w} <= |F|_{1,w} |G|_{1,w}`
/// * `left_module`: `|G * F|_{p,m} <= |G|_{1,w} |F|_{p,m}`
/// * `right_module`: `|F * G^v|_{p,m} <= |F|_{p,m} |G|_{1,w}`
/// * `duality`: `|F * G^v|_{inf,1/w} <= |F|_{p,m} |G|_{q,1/m}`
pub fn young_check(f: &GroupField, g: &GroupField, p: f64, m: &WeightSpec, w: &WeightSpec) -> Result<YoungReport> {
    f.check_same(g)?;
    check_weight_group(f, m)?;
    check_weight_group(f, w)?;
    if !is_p_control(w, m, p)? {
        return Err(CoorbitError::NotControlWeight(format!("{w:?} does not control {m:?} at p = {p}")));
    }
    let q = conjugate_exponent(p);
    let quad = f.quad();
    let mv = m.on_nodes(quad)?;
    let wv = w.on_nodes(quad)?;
    let m_inv: Vec<f64> = mv.iter().map(|x| 1.0 / x).collect();
    let w_inv: Vec<f64> = wv.iter().map(|x| 1.0 / x).collect();

    let f_pm = lp_from_nodes(f, p, &mv);
    let f_1w = lp_from_nodes(f, 1.0, &wv);
    let g_1w = lp_from_nodes(g, 1.0, &wv);
    let g_qm = lp_from_nodes(g, q, &m_inv);

    let fg = convolve(f, g)?;
    let gf = convolve(g, f)?;
    let f_gv = convolve(f, &involute(g, Involution::Check))?;

    let checks = vec![
        InequalityCheck::new("algebra", lp_from_nodes(&fg, 1.0, &wv), f_1w * g_1w),
        InequalityCheck::new("left_module", lp_from_nodes(&gf, p, &mv), g_1w * f_pm),
        InequalityCheck::new("right_module", lp_from_nodes(&f_gv, p, &mv), f_pm * g_1w),
        InequalityCheck::new("duality", lp_from_nodes(&f_gv, f64::INFINITY, &w_inv), f_pm * g_qm),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(YoungReport { checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use crate::group_core::build_affine_quadrature;
    use crate::group_core::build_tf_quadrature;
    use crate::signal::mexican_hat;
    use crate::voice::{normalize_admissible, reproducing_kernel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_affine(nb: usize, ns: usize) -> Arc<GroupQuadrature> {
        Arc::new(build_affine_quadrature(-4.0, 4.0, nb, 0.25, 4.0, ns, &[1, -1]).unwrap())
    }

    fn bump(p: &GroupPoint, b0: f64, u0: f64, s: f64) -> Complex64 {
        let a = p.as_affine().unwrap();
        let u = a.a.abs().ln();
        let r2 = ((a.b - b0) / s).powi(2) + ((u - u0) / s).powi(2);
        let sign = if a.a > 0.0 { 1.0 } else { 0.5 };
        if r2 >= 1.0 {
            return ZERO;
        }
        Complex64::new(sign * (1.0 - r2).powi(3), 0.3 * sign * (b0 - a.b) * (1.0 - r2).powi(3))
    }

    fn random_bump(q: &Arc<GroupQuadrature>, rng: &mut ChaCha8Rng) -> GroupField {
        let (b0, u0, s) = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.4..0.4), rng.gen_range(0.6..1.0));
        GroupField::from_fn(q.clone(), |p| bump(p, b0, u0, s))
    }

    fn max_diff(a: &GroupField, b: &GroupField) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn norms_basics() {
        let q = small_affine(32, 9);
        let one = WeightSpec::unit(GroupKind::Affine);
        assert_eq!(lpm_norm(&GroupField::zeros(q.clone()), 2.0, &one).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_bump(&q, &mut rng);
        let g = random_bump(&q, &mut rng);
        let m1 = WeightSpec::power_scale(1.0);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            let n = lpm_norm(&f, p, &m1).unwrap();
            let c = Complex64::new(-2.0, 1.5);
            let ns = lpm_norm(&f.scaled(c), p, &m1).unwrap();
            assert!((ns - c.norm() * n).abs() <= 1e-12 * ns);
            let sum = lpm_norm(&f.add(&g).unwrap(), p, &m1).unwrap();
            assert!(sum <= n + lpm_norm(&g, p, &m1).unwrap() + 1e-12);
        }
        // m_1 >= (1/4) on a <= 4, so the m_1 norm dominates a quarter of the unweighted one.
        let n1 = lpm_norm(&f, 2.0, &m1).unwrap();
        let n0 = lpm_norm(&f, 2.0, &one).unwrap();
        assert!(n1 >= 0.25 * n0);
        assert!(lpm_norm(&f, 0.5, &m1).is_err());
        assert!(lpm_norm(&f, 2.0, &WeightSpec::poly_tf(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn indicator_norm_is_haar_mass() {
        let u = NeighborhoodSpec::affine(1.0, 4.0).unwrap();
        assert!((u.haar_mass() - 1.5).abs() < 1e-15);
        let q = Arc::new(build_affine_quadrature(-2.0, 2.0, 256, 0.125, 8.0, 97, &[1]).unwrap());
        let n = lpm_norm(&edge_halved_indicator(&q), 1.0, &WeightSpec::unit(GroupKind::Affine)).unwrap();
        assert!((n - 1.5).abs() < 1e-3, "{n}");
    }

    /// Indicator of `A_{1,4}` with boundary nodes at 1/2, so the node sum is a
    /// trapezoid rule on each axis.
    fn edge_halved_indicator(q: &Arc<GroupQuadrature>) -> GroupField {
        let h = |v: f64, lim: f64| {
            if (v.abs() - lim).abs() < 1e-9 {
                0.5
            } else if v.abs() < lim {
                1.0
            } else {
                0.0
            }
        };
        GroupField::from_fn(q.clone(), |p| {
            let a = p.as_affine().unwrap();
            Complex64::new(h(a.b, 0.5) * h(a.a.ln(), 2f64.ln()), 0.0)
        })
    }

    #[test]
    fn involutions() {
        let q = small_affine(64, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_bump(&q, &mut rng);
        let twice = involute(&involute(&f, Involution::Check), Involution::Check);
        let scale = f.values().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_diff(&twice, &f) < 0.1 * scale);
        let z = involute(&GroupField::zeros(q.clone()), Involution::Nabla);
        assert!(z.values().iter().all(|v| *v == ZERO));
        let n = involute(&f, Involution::Nabla);
        let c = involute(&f, Involution::Check);
        for (a, b) in n.values().iter().zip(c.values()) {
            assert_eq!(*a, b.conj());
        }
    }

    #[test]
    fn kernel_of_real_even_wavelet_is_nabla_invariant() {
        let psi = mexican_hat(-16.0, 1.0 / 32.0, 1024).unwrap();
        let q = Arc::new(build_affine_quadrature(-4.0, 4.0, 256, 0.25, 4.0, 33, &[1, -1]).unwrap());
        let k = reproducing_kernel(&psi, &q).unwrap();
        let kn = involute(&k, Involution::Nabla);
        // Nodes whose inverse also lands on a node: b = 0 column and a = 1 row.
        let c = q.affine().unwrap();
        let ib0 = 128;
        for br in 0..2 {
            for iu in 0..33 {
                let i = c.index(br, iu, ib0);
                assert!((k.values()[i] - kn.values()[i]).norm() < 1e-6);
            }
        }
        let iu0 = 16;
        for ib in 64..192 {
            let i = c.index(0, iu0, ib);
            assert!((k.values()[i] - kn.values()[i]).norm() < 1e-6);
        }
    }

    #[test]
    fn fast_convolution_matches_double_sum() {
        let q = small_affine(24, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let f = random_bump(&q, &mut rng);
            let g = random_bump(&q, &mut rng);
            let fast = convolve(&f, &g).unwrap();
            let slow = convolve_direct(&f, &g).unwrap();
            assert!(max_diff(&fast, &slow) < 1e-10, "{}", max_diff(&fast, &slow));
            assert!((fast.coverage - slow.coverage).abs() < 1e-12);
            assert!(fast.coverage > 0.0 && fast.coverage < 1.0);
            assert!(fast.tail_bound >= 0.0);
        }
        let zero = GroupField::zeros(q.clone());
        let f = random_bump(&q, &mut rng);
        assert!(convolve(&f, &zero).unwrap().values().iter().all(|z| *z == ZERO));
        let other = small_affine(24, 11);
        assert!(convolve(&f, &GroupField::zeros(other)).is_err());
    }

    #[test]
    fn indicator_self_convolution_at_identity() {
        // chi_A * chi_A (e) = |A cap A^-1|; A^-1 = {(-b/a, 1/a)} and the
        // rectangle is symmetric in ln a, so the overlap is where |b| <= min(1/2, a/2).
        let exact = {
            // int_{1/2}^{2} min(1, a) da / a^2
            let lo = 1.0 / 2.0f64;
            (1.0f64.ln() - lo.ln()) + (1.0 - 0.5)
        };
        let mut last = f64::INFINITY;
        for (nb, ns) in [(64, 25), (128, 49), (256, 97)] {
            let q = Arc::new(build_affine_quadrature(-2.0, 2.0, nb, 0.125, 8.0, ns, &[1]).unwrap());
            let chi = edge_halved_indicator(&q);
            let conv = convolve(&chi, &chi).unwrap();
            let e = q.affine().unwrap().index(0, (ns - 1) / 2, nb / 2);
            let v = conv.values()[e].re;
            let err = (v - exact).abs();
            assert!(err < last, "{nb}: {v} vs {exact}");
            last = err;
            if nb == 64 {
                let slow = convolve_direct(&chi, &chi).unwrap();
                assert!((slow.values()[e].re - v).abs() < 1e-10);
            }
        }
        assert!(last < 0.03, "{last}");
    }

    #[test]
    fn kernel_is_idempotent() {
        let psi = normalize_admissible(&mexican_hat(-32.0, 1.0 / 16.0, 1024).unwrap()).unwrap();
        let q = Arc::new(build_affine_quadrature(-16.0, 16.0, 256, 1.0 / 16.0, 16.0, 41, &[1, -1]).unwrap());
        let k = reproducing_kernel(&psi, &q).unwrap();
        let kk = convolve(&k, &k).unwrap();
        let r = kk.sub(&k).unwrap().l2_norm() / k.l2_norm();
        assert!(r < 0.05, "{r}");
    }

    #[test]
    fn convolution_is_associative() {
        let q = small_affine(32, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let narrow = |rng: &mut ChaCha8Rng| {
            let (b0, u0) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2));
            GroupField::from_fn(q.clone(), move |p| bump(p, b0, u0, 0.7))
        };
        let (f, g, h) = (narrow(&mut rng), narrow(&mut rng), narrow(&mut rng));
        let l = convolve(&convolve(&f, &g).unwrap(), &h).unwrap();
        let r = convolve(&f, &convolve(&g, &h).unwrap()).unwrap();
        let rel = l.sub(&r).unwrap().l2_norm() / l.l2_norm();
        assert!(rel < 0.05, "{rel}");
    }

    fn tf_quad(n: usize, d: f64) -> Arc<GroupQuadrature> {
        let x0 = -(n as f64 / 2.0) * d;
        Arc::new(build_tf_quadrature(x0, d, n, x0, d, n).unwrap())
    }

    #[test]
    fn tf_convolution() {
        let q = tf_quad(64, 0.25);
        let gauss = |s2: f64| {
            GroupField::from_fn(q.clone(), move |p| {
                let t = p.as_tf().unwrap();
                Complex64::new((-(t.x * t.x + t.omega * t.omega) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2), 0.0)
            })
        };
        let (f, g) = (gauss(1.0), gauss(0.5));
        let fg = tf_convolve(&f, &g).unwrap();
        let gf = tf_convolve(&g, &f).unwrap();
        assert!(max_diff(&fg, &gf) < 1e-10);
        let want = gauss(1.5);
        assert!(max_diff(&fg, &want) < 1e-4, "{}", max_diff(&fg, &want));
        let zero = GroupField::zeros(q.clone());
        assert!(tf_convolve(&f, &zero).unwrap().values().iter().all(|z| z.norm() < 1e-18));

        let small = tf_quad(12, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rand_field = |rng: &mut ChaCha8Rng| {
            let v = (0..small.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            GroupField::new(small.clone(), v).unwrap()
        };
        let (a, b) = (rand_field(&mut rng), rand_field(&mut rng));
        assert!(max_diff(&tf_convolve(&a, &b).unwrap(), &convolve_direct(&a, &b).unwrap()) < 1e-10);
        // Grid not anchored at the origin: lags fall between nodes.
        let off = Arc::new(build_tf_quadrature(-2.9, 0.5, 12, -3.1, 0.5, 10).unwrap());
        let v = (0..off.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
        let c = GroupField::new(off.clone(), v).unwrap();
        assert!(max_diff(&tf_convolve(&c, &c).unwrap(), &convolve_direct(&c, &c).unwrap()) < 1e-10);
    }

    #[test]
    fn oscillation_basics() {
        let q = small_affine(64, 17);
        let one = GroupField::from_fn(q.clone(), |_| Complex64::new(2.0, -1.0));
        let u = NeighborhoodSpec::affine(0.5, 1.5).unwrap();
        // Constant field: zero away from the chart edge, where out-of-chart reads are zero.
        let osc = oscillation(&one, &u).unwrap();
        let c = q.affine().unwrap();
        for br in 0..2 {
            for iu in 3..14 {
                for ib in 8..56 {
                    assert!(osc.values()[c.index(br, iu, ib)].norm() < 1e-14);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_bump(&q, &mut rng);
        let small = oscillation(&f, &u).unwrap();
        let big = oscillation(&f, &NeighborhoodSpec::Affine { beta: 1.5, alpha: 1.5f64.powi(3), density: 19 }).unwrap();
        for (s, b) in small.values().iter().zip(big.values()) {
            assert!(s.re >= 0.0 && s.im == 0.0);
            assert!(s.re <= b.re + 1e-12);
        }
        let tfq = tf_quad(16, 0.5);
        assert!(oscillation(&GroupField::zeros(tfq), &u).is_err());
        assert!(NeighborhoodSpec::affine(1.0, 1.0).is_err());
        assert!(NeighborhoodSpec::affine(0.0, 2.0).is_err());
    }

    #[test]
    fn neighbourhood_samples_contain_identity() {
        for u in [NeighborhoodSpec::affine(1.0, 2.0).unwrap(), NeighborhoodSpec::tf(0.5, 2.0).unwrap()] {
            let s = u.samples();
            assert_eq!(s.len(), 49);
            assert!(s.iter().all(|p| u.contains(p)));
            let id = match u.group() {
                GroupKind::Affine => GroupPoint::affine(0.0, 1.0),
                GroupKind::TfPlane => GroupPoint::tf(0.0, 0.0),
            };
            assert!(s.iter().any(|p| *p == id));
        }
        let json = serde_json::to_string(&NeighborhoodSpec::affine(1.0, 2.0).unwrap()).unwrap();
        let back: NeighborhoodSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, NeighborhoodSpec::affine(1.0, 2.0).unwrap());
    }

    #[test]
    fn young_inequalities() {
        let q = small_affine(32, 13);
        let m1 = WeightSpec::power_scale(1.0);
        let w2 = WeightSpec::symmetric_power(2.0).unwrap();
        let zero = GroupField::zeros(q.clone());
        let r = young_check(&zero, &zero, 2.0, &m1, &w2).unwrap();
        assert!(r.pass && r.checks.iter().all(|c| c.lhs == 0.0 && c.rhs == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4 {
            let f = random_bump(&q, &mut rng);
            let g = random_bump(&q, &mut rng);
            let r = young_check(&f, &g, 2.0, &m1, &w2).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let f = random_bump(&q, &mut rng);
        let bad = WeightSpec::symmetric_power(1.2).unwrap();
        assert!(matches!(young_check(&f, &f, 2.0, &m1, &bad), Err(CoorbitError::NotControlWeight(_))));
    }

    #[test]
    fn projection_is_nearly_idempotent() {
        let psi = normalize_admissible(&mexican_hat(-32.0, 1.0 / 16.0, 1024).unwrap()).unwrap();
        let q = Arc::new(build_affine_quadrature(-16.0, 16.0, 256, 1.0 / 16.0, 16.0, 41, &[1, -1]).unwrap());
        let k = reproducing_kernel(&psi, &q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_bump(&q, &mut rng);
        let pf = project(&f, &k).unwrap();
        let ppf = project(&pf, &k).unwrap();
        let r = ppf.sub(&pf).unwrap().l2_norm() / pf.l2_norm();
        assert!(r <= 0.05, "{r}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lpm_norm_is_homogeneous(re in -5.0f64..5.0, im in -5.0f64..5.0, p in 1.0f64..6.0, seed in 0u64..1000) {
            let q = small_affine(16, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_bump(&q, &mut rng);
            let m = WeightSpec::power_scale(0.5);
            let c = Complex64::new(re, im);
            let a = lpm_norm(&f.scaled(c), p, &m).unwrap();
            let b = c.norm() * lpm_norm(&f, p, &m).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }
    }
}
