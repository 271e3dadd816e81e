//! Group arithmetic and Haar quadrature for the affine group and the
//! time-frequency plane, plus the [`GroupField`] container.
//!
//! Affine law: `(b1, a1)(b2, a2) = (b1 + a1 b2, a1 a2)`, left Haar measure
//! `db da / a^2`, modular function `|a|`. On the chart `a = eps e^u` the
//! measure becomes `db du / |a|`.
//!
//! Heisenberg law: `(x1, w1, t1)(x2, w2, t2) = (x1 + x2, w1 + w2,
//! t1 t2 exp(pi i (x2.w1 - x1.w2)))`. All norms ignore the phase, so the
//! numerics live on the plane `R^2` with Lebesgue measure.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoorbitError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Fractional grid indices closer than this to an integer snap to it.
pub(crate) const SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePoint {
    pub b: f64,
    pub a: f64,
}

impl AffinePoint {
    pub const IDENTITY: AffinePoint = AffinePoint { b: 0.0, a: 1.0 };

    pub fn new(b: f64, a: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(invalid(format!("affine point needs finite b and nonzero a, got ({b}, {a})")));
        }
        Ok(AffinePoint { b, a })
    }

    pub fn mul(self, q: AffinePoint) -> AffinePoint {
        AffinePoint { b: self.b + self.a * q.b, a: self.a * q.a }
    }

    pub fn inv(self) -> AffinePoint {
        AffinePoint { b: -self.b / self.a, a: 1.0 / self.a }
    }

    pub fn modular(self) -> f64 {
        self.a.abs()
    }
}

pub fn affine_mul(p: AffinePoint, q: AffinePoint) -> AffinePoint {
    p.mul(q)
}

pub fn affine_inv(p: AffinePoint) -> AffinePoint {
    p.inv()
}

pub fn affine_modular(p: AffinePoint) -> f64 {
    p.modular()
}

/// A point `(x, w)` of the time-frequency plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfPoint {
    pub x: f64,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergPoint {
    pub x: Vec<f64>,
    pub omega: Vec<f64>,
    pub tau: Complex64,
}

impl HeisenbergPoint {
    pub fn new(x: Vec<f64>, omega: Vec<f64>, tau: Complex64) -> Result<Self> {
        if x.len() != omega.len() {
            return Err(CoorbitError::DimensionMismatch { left: x.len(), right: omega.len() });
        }
        if (tau.norm() - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("phase must have unit modulus, got |tau| = {}", tau.norm())));
        }
        Ok(HeisenbergPoint { x, omega, tau })
    }

    pub fn identity(d: usize) -> Self {
        HeisenbergPoint { x: vec![0.0; d], omega: vec![0.0; d], tau: Complex64::new(1.0, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn mul(&self, q: &HeisenbergPoint) -> Result<HeisenbergPoint> {
        if self.dim() != q.dim() {
            return Err(CoorbitError::DimensionMismatch { left: self.dim(), right: q.dim() });
        }
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let cross = dot(&q.x, &self.omega) - dot(&self.x, &q.omega);
        let phase = Complex64::from_polar(1.0, PI * cross);
        Ok(HeisenbergPoint {
            x: self.x.iter().zip(&q.x).map(|(a, b)| a + b).collect(),
            omega: self.omega.iter().zip(&q.omega).map(|(a, b)| a + b).collect(),
            tau: self.tau * q.tau * phase,
        })
    }

    pub fn inv(&self) -> HeisenbergPoint {
        HeisenbergPoint {
            x: self.x.iter().map(|v| -v).collect(),
            omega: self.omega.iter().map(|v| -v).collect(),
            tau: self.tau.conj(),
        }
    }
}

pub fn heis_mul(p: &HeisenbergPoint, q: &HeisenbergPoint) -> Result<HeisenbergPoint> {
    p.mul(q)
}

pub fn heis_inv(p: &HeisenbergPoint) -> HeisenbergPoint {
    p.inv()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Affine,
    TfPlane,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case")]
pub enum GroupPoint {
    Affine(AffinePoint),
    TfPlane(TfPoint),
    Heisenberg(HeisenbergPoint),
}

impl GroupPoint {
    pub fn affine(b: f64, a: f64) -> Self {
        GroupPoint::Affine(AffinePoint { b, a })
    }

    pub fn tf(x: f64, omega: f64) -> Self {
        GroupPoint::TfPlane(TfPoint { x, omega })
    }

    pub fn kind(&self) -> GroupKind {
        match self {
            GroupPoint::Affine(_) => GroupKind::Affine,
            _ => GroupKind::TfPlane,
        }
    }

    pub fn as_affine(&self) -> Option<AffinePoint> {
        match self {
            GroupPoint::Affine(p) => Some(*p),
            _ => None,
        }
    }

    /// Phase-free plane coordinates; `None` for affine points and for
    /// Heisenberg points of dimension other than 1.
    pub fn as_tf(&self) -> Option<TfPoint> {
        match self {
            GroupPoint::TfPlane(p) => Some(*p),
            GroupPoint::Heisenberg(h) if h.dim() == 1 => Some(TfPoint { x: h.x[0], omega: h.omega[0] }),
            _ => None,
        }
    }

    pub fn mul(&self, q: &GroupPoint) -> Result<GroupPoint> {
        match (self, q) {
            (GroupPoint::Affine(p), GroupPoint::Affine(q)) => Ok(GroupPoint::Affine(p.mul(*q))),
            (GroupPoint::Heisenberg(p), GroupPoint::Heisenberg(q)) => Ok(GroupPoint::Heisenberg(p.mul(q)?)),
            (p, q) => match (p.as_tf(), q.as_tf()) {
                (Some(p), Some(q)) => Ok(GroupPoint::tf(p.x + q.x, p.omega + q.omega)),
                _ => Err(CoorbitError::GroupMismatch(format!("cannot multiply {p:?} and {q:?}"))),
            },
        }
    }

    pub fn inv(&self) -> GroupPoint {
        match self {
            GroupPoint::Affine(p) => GroupPoint::Affine(p.inv()),
            GroupPoint::TfPlane(p) => GroupPoint::tf(-p.x, -p.omega),
            GroupPoint::Heisenberg(h) => GroupPoint::Heisenberg(h.inv()),
        }
    }
}

/// Serialized form of a quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartSpec {
    Affine {
        b_lo: f64,
        b_hi: f64,
        n_b: usize,
        a_min: f64,
        a_max: f64,
        n_scales: usize,
        signs: Vec<i8>,
    },
    TfPlane {
        x0: f64,
        dx: f64,
        nx: usize,
        w0: f64,
        dw: f64,
        nw: usize,
    },
}

/// Log-uniform affine chart. Node order: sign branch, then `u`, then `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineChart {
    pub(crate) b_lo: f64,
    pub(crate) b_hi: f64,
    pub(crate) n_b: usize,
    pub(crate) db: f64,
    pub(crate) a_min: f64,
    pub(crate) a_max: f64,
    pub(crate) n_scales: usize,
    pub(crate) u0: f64,
    pub(crate) du: f64,
    pub(crate) signs: Vec<i8>,
}

impl AffineChart {
    pub fn n_b(&self) -> usize {
        self.n_b
    }
    pub fn n_scales(&self) -> usize {
        self.n_scales
    }
    pub fn db(&self) -> f64 {
        self.db
    }
    pub fn du(&self) -> f64 {
        self.du
    }
    pub fn b_lo(&self) -> f64 {
        self.b_lo
    }
    pub fn b_hi(&self) -> f64 {
        self.b_hi
    }
    pub fn a_min(&self) -> f64 {
        self.a_min
    }
    pub fn a_max(&self) -> f64 {
        self.a_max
    }
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
    /// One row per (sign, scale) pair.
    pub fn n_rows(&self) -> usize {
        self.signs.len() * self.n_scales
    }
    pub fn b(&self, ib: usize) -> f64 {
        self.b_lo + ib as f64 * self.db
    }
    pub fn u(&self, iu: usize) -> f64 {
        self.u0 + iu as f64 * self.du
    }
    pub fn row_sign(&self, row: usize) -> f64 {
        self.signs[row / self.n_scales] as f64
    }
    pub fn row_scale(&self, row: usize) -> f64 {
        self.row_sign(row) * self.u(row % self.n_scales).exp()
    }
    pub fn row_weight(&self, row: usize) -> f64 {
        self.db * self.du / self.row_scale(row).abs()
    }
    pub fn index(&self, branch: usize, iu: usize, ib: usize) -> usize {
        (branch * self.n_scales + iu) * self.n_b + ib
    }

    fn branch_of(&self, a: f64) -> Option<usize> {
        let s = if a > 0.0 { 1 } else { -1 };
        self.signs.iter().position(|&e| e == s)
    }

    /// Fractional row position for a scale, if inside the chart.
    pub(crate) fn locate_scale(&self, a: f64) -> Option<(usize, f64)> {
        if a == 0.0 || !a.is_finite() {
            return None;
        }
        let branch = self.branch_of(a)?;
        let fu = snap((a.abs().ln() - self.u0) / self.du);
        if fu < 0.0 || fu > (self.n_scales - 1) as f64 {
            return None;
        }
        Some((branch, fu))
    }

    pub(crate) fn locate_b(&self, b: f64) -> Option<f64> {
        let fb = snap((b - self.b_lo) / self.db);
        if fb < 0.0 || fb > (self.n_b - 1) as f64 || fb.is_nan() {
            return None;
        }
        Some(fb)
    }

    /// Bilinear interpolation in `(b, u)` on the matching sign branch.
    pub fn interpolate(&self, values: &[Complex64], b: f64, a: f64) -> Option<Complex64> {
        let (branch, fu) = self.locate_scale(a)?;
        let fb = self.locate_b(b)?;
        let (iu, tu) = split(fu, self.n_scales);
        let (ib, tb) = split(fb, self.n_b);
        let at = |iu: usize, ib: usize| values[self.index(branch, iu, ib)];
        let mut z = at(iu, ib) * ((1.0 - tu) * (1.0 - tb));
        if tb > 0.0 {
            z += at(iu, ib + 1) * ((1.0 - tu) * tb);
        }
        if tu > 0.0 {
            z += at(iu + 1, ib) * (tu * (1.0 - tb));
            if tb > 0.0 {
                z += at(iu + 1, ib + 1) * (tu * tb);
            }
        }
        Some(z)
    }
}

/// Uniform grid on the time-frequency plane. Node order: `x` major, then `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct TfChart {
    pub(crate) x0: f64,
    pub(crate) dx: f64,
    pub(crate) nx: usize,
    pub(crate) w0: f64,
    pub(crate) dw: f64,
    pub(crate) nw: usize,
}

impl TfChart {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nw(&self) -> usize {
        self.nw
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dw(&self) -> f64 {
        self.dw
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn w0(&self) -> f64 {
        self.w0
    }
    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }
    pub fn w(&self, iw: usize) -> f64 {
        self.w0 + iw as f64 * self.dw
    }
    pub fn index(&self, ix: usize, iw: usize) -> usize {
        ix * self.nw + iw
    }

    pub fn interpolate(&self, values: &[Complex64], x: f64, w: f64) -> Option<Complex64> {
        let fx = snap((x - self.x0) / self.dx);
        let fw = snap((w - self.w0) / self.dw);
        if !(0.0..=(self.nx - 1) as f64).contains(&fx) || !(0.0..=(self.nw - 1) as f64).contains(&fw) {
            return None;
        }
        let (ix, tx) = split(fx, self.nx);
        let (iw, tw) = split(fw, self.nw);
        let at = |ix: usize, iw: usize| values[self.index(ix, iw)];
        let mut z = at(ix, iw) * ((1.0 - tx) * (1.0 - tw));
        if tw > 0.0 {
            z += at(ix, iw + 1) * ((1.0 - tx) * tw);
        }
        if tx > 0.0 {
            z += at(ix + 1, iw) * (tx * (1.0 - tw));
            if tw > 0.0 {
                z += at(ix + 1, iw + 1) * (tx * tw);
            }
        }
        Some(z)
    }
}

pub(crate) fn snap(f: f64) -> f64 {
    let r = f.round();
    if (f - r).abs() < SNAP {
        r
    } else {
        f
    }
}

/// Integer cell and fractional offset for a position in `[0, n-1]`.
fn split(f: f64, n: usize) -> (usize, f64) {
    let i = (f.floor() as usize).min(n - 1);
    let t = f - i as f64;
    if i == n - 1 {
        (i, 0.0)
    } else {
        (i, t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChartSpec", into = "ChartSpec")]
pub enum GroupQuadrature {
    Affine(AffineChart),
    TfPlane(TfChart),
}

impl TryFrom<ChartSpec> for GroupQuadrature {
    type Error = CoorbitError;
    fn try_from(s: ChartSpec) -> Result<Self> {
        match s {
            ChartSpec::Affine { b_lo, b_hi, n_b, a_min, a_max, n_scales, signs } => {
                build_affine_quadrature(b_lo, b_hi, n_b, a_min, a_max, n_scales, &signs)
            }
            ChartSpec::TfPlane { x0, dx, nx, w0, dw, nw } => build_tf_quadrature(x0, dx, nx, w0, dw, nw),
        }
    }
}

impl From<GroupQuadrature> for ChartSpec {
    fn from(q: GroupQuadrature) -> Self {
        q.spec()
    }
}

pub fn build_affine_quadrature(
    b_lo: f64,
    b_hi: f64,
    n_b: usize,
    a_min: f64,
    a_max: f64,
    n_scales: usize,
    signs: &[i8],
) -> Result<GroupQuadrature> {
    if !(b_lo.is_finite() && b_hi.is_finite() && b_lo < b_hi) {
        return Err(invalid(format!("need b_lo < b_hi, got [{b_lo}, {b_hi})")));
    }
    if !(a_min > 0.0 && a_min < a_max && a_max.is_finite()) {
        return Err(invalid(format!("need 0 < a_min < a_max, got [{a_min}, {a_max}]")));
    }
    if n_b < 2 || n_scales < 2 {
        return Err(invalid("need n_b >= 2 and n_scales >= 2"));
    }
    if signs.is_empty() || signs.iter().any(|s| *s != 1 && *s != -1) {
        return Err(invalid("signs must be a nonempty subset of {1, -1}"));
    }
    if signs.len() == 2 && signs[0] == signs[1] {
        return Err(invalid("duplicate sign branch"));
    }
    let u0 = a_min.ln();
    Ok(GroupQuadrature::Affine(AffineChart {
        b_lo,
        b_hi,
        n_b,
        db: (b_hi - b_lo) / n_b as f64,
        a_min,
        a_max,
        n_scales,
        u0,
        du: (a_max.ln() - u0) / (n_scales - 1) as f64,
        signs: signs.to_vec(),
    }))
}

pub fn build_tf_quadrature(x0: f64, dx: f64, nx: usize, w0: f64, dw: f64, nw: usize) -> Result<GroupQuadrature> {
    if !(dx > 0.0 && dw > 0.0 && x0.is_finite() && w0.is_finite()) {
        return Err(invalid("TF grid needs positive steps"));
    }
    if nx < 2 || nw < 2 {
        return Err(invalid("TF grid needs at least two nodes per axis"));
    }
    Ok(GroupQuadrature::TfPlane(TfChart { x0, dx, nx, w0, dw, nw }))
}

impl GroupQuadrature {
    /// `N = 4096` on `[-32, 32)`, 65 log-spaced scales per sign on `[1/16, 16]`.
    pub fn desk_default() -> Self {
        build_affine_quadrature(-32.0, 32.0, 4096, 1.0 / 16.0, 16.0, 65, &[1, -1]).expect("valid defaults")
    }

    pub fn kind(&self) -> GroupKind {
        match self {
            GroupQuadrature::Affine(_) => GroupKind::Affine,
            GroupQuadrature::TfPlane(_) => GroupKind::TfPlane,
        }
    }

    pub fn spec(&self) -> ChartSpec {
        match self {
            GroupQuadrature::Affine(c) => ChartSpec::Affine {
                b_lo: c.b_lo,
                b_hi: c.b_hi,
                n_b: c.n_b,
                a_min: c.a_min,
                a_max: c.a_max,
                n_scales: c.n_scales,
                signs: c.signs.clone(),
            },
            GroupQuadrature::TfPlane(c) => ChartSpec::TfPlane {
                x0: c.x0,
                dx: c.dx,
                nx: c.nx,
                w0: c.w0,
                dw: c.dw,
                nw: c.nw,
            },
        }
    }

    pub fn affine(&self) -> Option<&AffineChart> {
        match self {
            GroupQuadrature::Affine(c) => Some(c),
            _ => None,
        }
    }

    pub fn tf(&self) -> Option<&TfChart> {
        match self {
            GroupQuadrature::TfPlane(c) => Some(c),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GroupQuadrature::Affine(c) => c.n_rows() * c.n_b,
            GroupQuadrature::TfPlane(c) => c.nx * c.nw,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> GroupPoint {
        match self {
            GroupQuadrature::Affine(c) => {
                let row = idx / c.n_b;
                GroupPoint::affine(c.b(idx % c.n_b), c.row_scale(row))
            }
            GroupQuadrature::TfPlane(c) => GroupPoint::tf(c.x(idx / c.nw), c.w(idx % c.nw)),
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        match self {
            GroupQuadrature::Affine(c) => c.row_weight(idx / c.n_b),
            GroupQuadrature::TfPlane(c) => c.dx * c.dw,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i)).sum()
    }

    /// Chart interpolation; `None` outside the chart or for a point of the wrong group.
    pub fn interpolate(&self, values: &[Complex64], x: &GroupPoint) -> Option<Complex64> {
        match self {
            GroupQuadrature::Affine(c) => {
                let p = x.as_affine()?;
                c.interpolate(values, p.b, p.a)
            }
            GroupQuadrature::TfPlane(c) => {
                let p = x.as_tf()?;
                c.interpolate(values, p.x, p.omega)
            }
        }
    }

    pub(crate) fn check_point(&self, y: &GroupPoint) -> Result<()> {
        let ok = match self {
            GroupQuadrature::Affine(_) => y.as_affine().is_some(),
            GroupQuadrature::TfPlane(_) => y.as_tf().is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(CoorbitError::GroupMismatch(format!("{y:?} does not act on a {:?} chart", self.kind())))
        }
    }
}

/// Samples of a function on a group, attached to a quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldFile", into = "FieldFile")]
pub struct GroupField {
    quad: Arc<GroupQuadrature>,
    values: Vec<Complex64>,
    /// Fraction of evaluations that landed inside the chart when this field
    /// was produced by resampling; 1 otherwise.
    pub coverage: f64,
    /// Bound on mass dropped by chart truncation during convolution; 0 otherwise.
    pub tail_bound: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFile {
    quadrature: GroupQuadrature,
    coverage: f64,
    tail_bound: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<FieldFile> for GroupField {
    type Error = CoorbitError;
    fn try_from(f: FieldFile) -> Result<Self> {
        if f.re.len() != f.im.len() {
            return Err(CoorbitError::DimensionMismatch { left: f.re.len(), right: f.im.len() });
        }
        let values = f.re.iter().zip(&f.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        let mut g = GroupField::new(Arc::new(f.quadrature), values)?;
        g.coverage = f.coverage;
        g.tail_bound = f.tail_bound;
        Ok(g)
    }
}

impl From<GroupField> for FieldFile {
    fn from(g: GroupField) -> Self {
        FieldFile {
            quadrature: (*g.quad).clone(),
            coverage: g.coverage,
            tail_bound: g.tail_bound,
            re: g.values.iter().map(|z| z.re).collect(),
            im: g.values.iter().map(|z| z.im).collect(),
        }
    }
}

impl GroupField {
    pub fn new(quad: Arc<GroupQuadrature>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != quad.len() {
            return Err(CoorbitError::DimensionMismatch { left: quad.len(), right: values.len() });
        }
        Ok(GroupField { quad, values, coverage: 1.0, tail_bound: 0.0 })
    }

    pub fn zeros(quad: Arc<GroupQuadrature>) -> Self {
        let n = quad.len();
        GroupField { quad, values: vec![ZERO; n], coverage: 1.0, tail_bound: 0.0 }
    }

    pub fn from_fn(quad: Arc<GroupQuadrature>, f: impl Fn(&GroupPoint) -> Complex64) -> Self {
        let values = (0..quad.len()).map(|i| f(&quad.point(i))).collect();
        GroupField { quad, values, coverage: 1.0, tail_bound: 0.0 }
    }

    pub fn quad(&self) -> &Arc<GroupQuadrature> {
        &self.quad
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        GroupField::new(self.quad.clone(), values)
    }

    pub fn same_quadrature(&self, other: &GroupField) -> bool {
        Arc::ptr_eq(&self.quad, &other.quad) || *self.quad == *other.quad
    }

    pub(crate) fn check_same(&self, other: &GroupField) -> Result<()> {
        if self.same_quadrature(other) {
            Ok(())
        } else {
            Err(CoorbitError::GridMismatch("fields live on different quadratures".into()))
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut g = self.clone();
        for z in &mut g.values {
            *z *= c;
        }
        g
    }

    pub fn add(&self, other: &GroupField) -> Result<Self> {
        self.check_same(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        self.with_values(v)
    }

    pub fn sub(&self, other: &GroupField) -> Result<Self> {
        self.check_same(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.with_values(v)
    }

    /// Unweighted `L^2` norm with respect to Haar measure.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, z)| z.norm_sqr() * self.quad.weight(i))
            .sum::<f64>()
            .sqrt()
    }

    pub fn value_at(&self, x: &GroupPoint) -> Option<Complex64> {
        self.quad.interpolate(&self.values, x)
    }
}

/// `sum_nodes F(x) mu(x)`, in ascending node order.
pub fn haar_integral(f: &GroupField) -> Complex64 {
    let q = f.quad();
    f.values().iter().enumerate().map(|(i, z)| z * q.weight(i)).sum()
}

/// `(L_y F)(x) = F(y^-1 x)`, interpolated; out-of-chart reads are zero.
pub fn left_translate_field(f: &GroupField, y: &GroupPoint) -> Result<GroupField> {
    let q = f.quad().clone();
    q.check_point(y)?;
    let yi = y.inv();
    let mut inside = 0usize;
    let values: Vec<Complex64> = (0..q.len())
        .map(|i| {
            let x = q.point(i);
            let p = match (&yi.as_affine(), &x) {
                (Some(a), GroupPoint::Affine(xa)) => GroupPoint::Affine(a.mul(*xa)),
                _ => {
                    let (s, t) = (yi.as_tf().expect("checked"), x.as_tf().expect("tf node"));
                    GroupPoint::tf(s.x + t.x, s.omega + t.omega)
                }
            };
            match q.interpolate(f.values(), &p) {
                Some(z) => {
                    inside += 1;
                    z
                }
                None => ZERO,
            }
        })
        .collect();
    let mut g = GroupField::new(q, values)?;
    g.coverage = inside as f64 / g.len() as f64;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hp(x: f64, w: f64, tau: Complex64) -> HeisenbergPoint {
        HeisenbergPoint::new(vec![x], vec![w], tau).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn affine_examples() {
        let p = |b, a| AffinePoint::new(b, a).unwrap();
        assert_eq!(affine_mul(p(0.0, 1.0), p(3.0, -1.0)), p(3.0, -1.0));
        assert_eq!(affine_mul(p(1.0, 2.0), p(3.0, -1.0)), p(7.0, -2.0));
        assert_eq!(affine_mul(p(4.0, 2.0), p(-2.0, 0.5)), p(0.0, 1.0));
        assert_eq!(affine_inv(p(0.0, 1.0)), p(0.0, 1.0));
        assert_eq!(affine_inv(p(4.0, 2.0)), p(-2.0, 0.5));
        assert_eq!(affine_inv(p(-3.0, -1.0)), p(-3.0, -1.0));
        assert_eq!(affine_modular(p(0.0, 1.0)), 1.0);
        assert_eq!(affine_modular(p(3.0, -2.0)), 2.0);
        assert_eq!(affine_modular(p(5.0, 0.25)), 0.25);
        assert!(AffinePoint::new(1.0, 0.0).is_err());
    }

    #[test]
    fn heisenberg_examples() {
        let one = c(1.0, 0.0);
        let e = HeisenbergPoint::identity(1);
        let q = hp(0.3, -1.2, c(0.0, 1.0));
        assert_eq!(heis_mul(&e, &q).unwrap(), q);
        let r = heis_mul(&hp(1.0, 0.0, one), &hp(0.0, 1.0, one)).unwrap();
        assert!((r.tau - c(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!((r.x[0], r.omega[0]), (1.0, 1.0));
        // reversed order: exp(pi i (1*1 - 0*0)) = -1 as well
        let s = heis_mul(&hp(0.0, 1.0, one), &hp(1.0, 0.0, one)).unwrap();
        assert!((s.tau - c(-1.0, 0.0)).norm() < 1e-12);
        assert_eq!(heis_inv(&e), e);
        let i = heis_inv(&hp(1.0, 1.0, c(0.0, 1.0)));
        assert_eq!((i.x[0], i.omega[0]), (-1.0, -1.0));
        assert!((i.tau - c(0.0, -1.0)).norm() < 1e-15);
        let p = hp(2.0, 0.0, one);
        let pi = heis_inv(&p);
        assert_eq!((pi.x[0], pi.omega[0], pi.tau), (-2.0, 0.0, one));
        assert!(heis_mul(&p, &pi).unwrap() == HeisenbergPoint { x: vec![0.0], omega: vec![0.0], tau: one });
        let two = HeisenbergPoint::identity(2);
        assert!(matches!(heis_mul(&p, &two), Err(CoorbitError::DimensionMismatch { .. })));
        assert!(HeisenbergPoint::new(vec![0.0], vec![0.0], c(2.0, 0.0)).is_err());
    }

    #[test]
    fn quadrature_basics() {
        let q = build_affine_quadrature(-1.0, 1.0, 8, 0.25, 4.0, 5, &[1, -1]).unwrap();
        assert_eq!(q.len(), 8 * 5 * 2);
        assert!(build_affine_quadrature(-1.0, 1.0, 8, 2.0, 2.0, 5, &[1]).is_err());
        assert!(build_affine_quadrature(-1.0, 1.0, 1, 0.5, 2.0, 5, &[1]).is_err());
        let ch = q.affine().unwrap();
        for i in 0..q.len() {
            let a = q.point(i).as_affine().unwrap().a;
            assert!((q.weight(i) - ch.db() * ch.du() / a.abs()).abs() < 1e-15);
            assert!(q.weight(i) > 0.0);
        }
        let json = serde_json::to_string(&q).unwrap();
        assert_eq!(
            json,
            r#"{"group":"affine","b_lo":-1.0,"b_hi":1.0,"n_b":8,"a_min":0.25,"a_max":4.0,"n_scales":5,"signs":[1,-1]}"#
        );
        let back: GroupQuadrature = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q);
        let bad = r#"{"group":"affine","b_lo":-1.0,"b_hi":1.0,"n_b":8,"a_min":0.25,"a_max":4.0,"n_scales":5,"signs":[1],"extra":1}"#;
        assert!(serde_json::from_str::<GroupQuadrature>(bad).is_err());
    }

    /// Quadrature whose `b` nodes land on `+-beta/2` and whose `u` nodes land
    /// on `+-ln(alpha)/2`, scaled by `refine`.
    fn rect_chart(refine: usize) -> GroupQuadrature {
        let n_b = 64 * refine;
        let n_s = 24 * refine + 1;
        build_affine_quadrature(-2.0, 2.0, n_b, 0.125, 8.0, n_s, &[1]).unwrap()
    }

    fn indicator_a14(q: &Arc<GroupQuadrature>) -> GroupField {
        GroupField::from_fn(q.clone(), |p| {
            let p = p.as_affine().unwrap();
            let inside = p.b.abs() <= 0.5 + 1e-12 && p.a >= 0.5 - 1e-12 && p.a <= 2.0 + 1e-12;
            c(if inside { 1.0 } else { 0.0 }, 0.0)
        })
    }

    #[test]
    fn haar_mass_of_rectangle() {
        // The closed rectangle counts its boundary nodes in full.
        for refine in [1, 2] {
            let q = Arc::new(rect_chart(refine));
            let chi = indicator_a14(&q);
            let got = haar_integral(&chi).re;
            let ch = q.affine().unwrap();
            let tol = 2.0 * ch.db().max(ch.du()) * 1.5;
            assert!((got - 1.5).abs() <= tol, "refine {refine}: {got}");
        }
        let q = Arc::new(rect_chart(1));
        assert_eq!(haar_integral(&GroupField::zeros(q.clone())), c(0.0, 0.0));
        let ones = GroupField::from_fn(q.clone(), |_| c(1.0, 0.0));
        assert!((haar_integral(&ones).re - q.total_weight()).abs() < 1e-12);
    }

    fn bump(p: &GroupPoint, b0: f64, u0: f64) -> Complex64 {
        let p = p.as_affine().unwrap();
        let (x, y) = ((p.b - b0) / 0.8, (p.a.abs().ln() - u0) / 0.7);
        let r2 = x * x + y * y;
        if r2 >= 1.0 {
            c(0.0, 0.0)
        } else {
            c((-1.0 / (1.0 - r2)).exp(), 0.0)
        }
    }

    #[test]
    fn refinement_is_second_order() {
        let mut vals = Vec::new();
        for refine in [1, 2, 4] {
            let q = Arc::new(
                build_affine_quadrature(-3.0, 3.0, 48 * refine, 0.1, 10.0, 24 * refine + 1, &[1]).unwrap(),
            );
            vals.push(haar_integral(&GroupField::from_fn(q, |p| bump(p, 0.2, 0.1))).re);
        }
        let e1 = (vals[0] - vals[1]).abs();
        let e2 = (vals[1] - vals[2]).abs();
        assert!(e2 <= e1 + 1e-14, "{vals:?}");
    }

    #[test]
    fn translation_identity_and_grid_shift() {
        let q = Arc::new(rect_chart(1));
        let f = GroupField::from_fn(q.clone(), |p| bump(p, 0.0, 0.0));
        let same = left_translate_field(&f, &GroupPoint::affine(0.0, 1.0)).unwrap();
        assert_eq!(same.values(), f.values());
        let db = q.affine().unwrap().db();
        let shifted = left_translate_field(&f, &GroupPoint::affine(3.0 * db, 1.0)).unwrap();
        let ch = q.affine().unwrap();
        for iu in 0..ch.n_scales() {
            for ib in 3..ch.n_b() {
                assert_eq!(shifted.values()[ch.index(0, iu, ib)], f.values()[ch.index(0, iu, ib - 3)]);
            }
        }
        assert!(shifted.coverage < 1.0);
    }

    #[test]
    fn haar_invariance_of_translation() {
        let q = Arc::new(build_affine_quadrature(-6.0, 6.0, 384, 1.0 / 32.0, 32.0, 161, &[1, -1]).unwrap());
        let f = GroupField::from_fn(q.clone(), |p| bump(p, 0.0, 0.0));
        let base = haar_integral(&f).re;
        for y in [GroupPoint::affine(0.7, 1.3), GroupPoint::affine(-1.1, 0.6), GroupPoint::affine(0.4, -2.0)] {
            let g = left_translate_field(&f, &y).unwrap();
            let got = haar_integral(&g).re;
            assert!(((got - base) / base).abs() < 1e-3, "{y:?}: {got} vs {base}");
        }
    }

    #[test]
    fn tf_chart_interpolation() {
        let q = Arc::new(build_tf_quadrature(-2.0, 0.5, 9, -1.0, 0.25, 9).unwrap());
        let f = GroupField::from_fn(q.clone(), |p| {
            let t = p.as_tf().unwrap();
            c(2.0 * t.x + 3.0 * t.omega, 0.0)
        });
        let z = f.value_at(&GroupPoint::tf(0.3, 0.1)).unwrap();
        assert!((z.re - 0.9).abs() < 1e-12);
        assert!(f.value_at(&GroupPoint::tf(3.0, 0.0)).is_none());
        let t = left_translate_field(&f, &GroupPoint::tf(0.5, 0.25)).unwrap();
        let z = t.value_at(&GroupPoint::tf(0.0, 0.0)).unwrap();
        assert!((z.re - (2.0 * -0.5 + 3.0 * -0.25)).abs() < 1e-12);
    }

    #[test]
    fn field_json_roundtrip() {
        let q = Arc::new(build_tf_quadrature(0.0, 1.0, 2, 0.0, 1.0, 2).unwrap());
        let f = GroupField::new(q, vec![c(1.0, 2.0), c(0.0, -1.0), c(0.5, 0.0), c(0.0, 0.0)]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: GroupField = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }

    fn affine_pt() -> impl Strategy<Value = AffinePoint> {
        (-10.0..10.0f64, 0.05..20.0f64, any::<bool>())
            .prop_map(|(b, a, neg)| AffinePoint { b, a: if neg { -a } else { a } })
    }

    fn heis_pt() -> impl Strategy<Value = HeisenbergPoint> {
        (-5.0..5.0f64, -5.0..5.0f64, 0.0..(2.0 * PI))
            .prop_map(|(x, w, t)| hp(x, w, Complex64::from_polar(1.0, t)))
    }

    fn close(p: AffinePoint, q: AffinePoint, tol: f64) -> bool {
        (p.b - q.b).abs() <= tol * (1.0 + p.b.abs()) && (p.a - q.a).abs() <= tol * (1.0 + p.a.abs())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn affine_group_laws(p in affine_pt(), q in affine_pt(), r in affine_pt()) {
            prop_assert!(close(p.mul(q).mul(r), p.mul(q.mul(r)), 1e-12));
            prop_assert!(close(p.mul(p.inv()), AffinePoint::IDENTITY, 1e-12));
            let lhs = p.mul(q).modular();
            prop_assert!((lhs - p.modular() * q.modular()).abs() <= 1e-12 * lhs);
        }

        #[test]
        fn heisenberg_group_laws(p in heis_pt(), q in heis_pt(), r in heis_pt()) {
            let a = p.mul(&q).unwrap().mul(&r).unwrap();
            let b = p.mul(&q.mul(&r).unwrap()).unwrap();
            prop_assert!((a.x[0] - b.x[0]).abs() < 1e-12 && (a.omega[0] - b.omega[0]).abs() < 1e-12);
            prop_assert!((a.tau - b.tau).norm() < 1e-10);
            let e = p.mul(&p.inv()).unwrap();
            prop_assert!(e.x[0].abs() < 1e-12 && e.omega[0].abs() < 1e-12);
            prop_assert!((e.tau - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }
}
