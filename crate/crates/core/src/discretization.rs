//! Point families on the affine group and the time-frequency plane, their
//! well-spreadness checks, sampling of fields, discrete weighted norms and
//! indicator-based partitions of unity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoorbitError, Result};
use crate::group_core::{GroupField, GroupKind, GroupPoint, GroupQuadrature};
use crate::group_field::NeighborhoodSpec;
use crate::weights::{check_exponent, WeightSpec};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const EDGE_TOL: f64 = 1e-9;

/// `(eps alpha^j beta k, eps alpha^j)` for `j` in `j[0]..=j[1]`, `k` in
/// `k[0]..=k[1]` and `eps` in `signs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineLattice {
    pub alpha: f64,
    pub beta: f64,
    pub j: [i64; 2],
    pub k: [i64; 2],
    pub signs: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TfGenerator {
    /// `alpha_x Z x beta_w Z`
    Separable { alpha_x: f64, beta_w: f64 },
    /// `c A Z^2`, `a` row-major.
    Matrix { c: f64, a: [[f64; 2]; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfLattice {
    pub generator: TfGenerator,
    pub k: [i64; 2],
    pub l: [i64; 2],
}

/// A finite point family. `Explicit` takes arbitrary points, duplicates allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Lattice {
    Affine(AffineLattice),
    Tf(TfLattice),
    Explicit { points: Vec<GroupPoint> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexTag {
    Affine { j: i64, k: i64, eps: i8 },
    Tf { k: i64, l: i64 },
    Explicit { i: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub tag: IndexTag,
    pub point: GroupPoint,
}

fn check_range(name: &str, r: [i64; 2]) -> Result<()> {
    if r[0] > r[1] {
        return Err(invalid(format!("empty index range {name} = {r:?}")));
    }
    Ok(())
}

fn range_len(r: [i64; 2]) -> usize {
    (r[1] - r[0] + 1) as usize
}

impl AffineLattice {
    /// `Lambda(beta, alpha)` on the window `|j| <= jmax`, `|k| <= kmax`, both signs.
    pub fn new(beta: f64, alpha: f64, jmax: i64, kmax: i64) -> Result<Self> {
        let l = AffineLattice { alpha, beta, j: [-jmax, jmax], k: [-kmax, kmax], signs: vec![1, -1] };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("lattice alpha must exceed 1, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("lattice beta must be positive, got {}", self.beta)));
        }
        check_range("j", self.j)?;
        check_range("k", self.k)?;
        if self.signs.is_empty() || self.signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(invalid(format!("signs must be a nonempty subset of {{1, -1}}, got {:?}", self.signs)));
        }
        let mut s = self.signs.clone();
        s.dedup();
        if s.len() != self.signs.len() {
            return Err(invalid("repeated sign"));
        }
        Ok(())
    }

    pub fn point(&self, j: i64, k: i64, eps: i8) -> GroupPoint {
        let s = self.alpha.powi(j as i32) * eps as f64;
        GroupPoint::affine(s * self.beta * k as f64, s)
    }

    fn index(&self, si: usize, j: i64, k: i64) -> usize {
        (si * range_len(self.j) + (j - self.j[0]) as usize) * range_len(self.k) + (k - self.k[0]) as usize
    }
}

impl TfGenerator {
    fn matrix(&self) -> [[f64; 2]; 2] {
        match *self {
            TfGenerator::Separable { alpha_x, beta_w } => [[alpha_x, 0.0], [0.0, beta_w]],
            TfGenerator::Matrix { c, a } => [[c * a[0][0], c * a[0][1]], [c * a[1][0], c * a[1][1]]],
        }
    }

    fn inverse(&self) -> [[f64; 2]; 2] {
        let m = self.matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
    }
}

impl TfLattice {
    pub fn separable(alpha_x: f64, beta_w: f64, kmax: i64, lmax: i64) -> Result<Self> {
        let l = TfLattice { generator: TfGenerator::Separable { alpha_x, beta_w }, k: [-kmax, kmax], l: [-lmax, lmax] };
        l.validate()?;
        Ok(l)
    }

    pub fn matrix(c: f64, a: [[f64; 2]; 2], kmax: i64, lmax: i64) -> Result<Self> {
        let l = TfLattice { generator: TfGenerator::Matrix { c, a }, k: [-kmax, kmax], l: [-lmax, lmax] };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        match self.generator {
            TfGenerator::Separable { alpha_x, beta_w } => {
                if !(alpha_x > 0.0 && beta_w > 0.0 && alpha_x.is_finite() && beta_w.is_finite()) {
                    return Err(invalid("separable lattice steps must be positive"));
                }
            }
            TfGenerator::Matrix { c, a } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(invalid(format!("lattice scale must be positive, got {c}")));
                }
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                if det.abs() < 1e-12 || !det.is_finite() {
                    return Err(invalid(format!("generator matrix is singular (det = {det})")));
                }
            }
        }
        check_range("k", self.k)?;
        check_range("l", self.l)
    }

    pub fn point(&self, k: i64, l: i64) -> GroupPoint {
        let m = self.generator.matrix();
        let (k, l) = (k as f64, l as f64);
        GroupPoint::tf(m[0][0] * k + m[0][1] * l, m[1][0] * k + m[1][1] * l)
    }

    fn index(&self, k: i64, l: i64) -> usize {
        (k - self.k[0]) as usize * range_len(self.l) + (l - self.l[0]) as usize
    }
}

impl Lattice {
    pub fn validate(&self) -> Result<()> {
        match self {
            Lattice::Affine(l) => l.validate(),
            Lattice::Tf(l) => l.validate(),
            Lattice::Explicit { points } => {
                if points.is_empty() {
                    return Err(invalid("explicit family is empty"));
                }
                let g = points[0].kind();
                if points.iter().any(|p| p.kind() != g || matches!(p, GroupPoint::Heisenberg(_))) {
                    return Err(CoorbitError::GroupMismatch("explicit family mixes groups".into()));
                }
                Ok(())
            }
        }
    }

    pub fn group(&self) -> GroupKind {
        match self {
            Lattice::Affine(_) => GroupKind::Affine,
            Lattice::Tf(_) => GroupKind::TfPlane,
            Lattice::Explicit { points } => points.first().map_or(GroupKind::Affine, |p| p.kind()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Lattice::Affine(l) => l.signs.len() * range_len(l.j) * range_len(l.k),
            Lattice::Tf(l) => range_len(l.k) * range_len(l.l),
            Lattice::Explicit { points } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Member `i` in [`lattice_points`] order, computed without listing the family.
    pub fn point_at(&self, i: usize) -> Option<LatticePoint> {
        if i >= self.len() {
            return None;
        }
        Some(match self {
            Lattice::Affine(l) => {
                let (nj, nk) = (range_len(l.j), range_len(l.k));
                let (si, rest) = (i / (nj * nk), i % (nj * nk));
                let (j, k) = (l.j[0] + (rest / nk) as i64, l.k[0] + (rest % nk) as i64);
                let eps = l.signs[si];
                LatticePoint { tag: IndexTag::Affine { j, k, eps }, point: l.point(j, k, eps) }
            }
            Lattice::Tf(t) => {
                let nl = range_len(t.l);
                let (k, l) = (t.k[0] + (i / nl) as i64, t.l[0] + (i % nl) as i64);
                LatticePoint { tag: IndexTag::Tf { k, l }, point: t.point(k, l) }
            }
            Lattice::Explicit { points } => LatticePoint { tag: IndexTag::Explicit { i }, point: points[i].clone() },
        })
    }
}

/// Every point of the family with its index; order is sign, `j`, `k` for
/// affine lattices and `k`, `l` for plane lattices.
pub fn lattice_points(lat: &Lattice) -> Result<Vec<LatticePoint>> {
    lat.validate()?;
    let mut out = Vec::with_capacity(lat.len());
    match lat {
        Lattice::Affine(l) => {
            for &eps in &l.signs {
                for j in l.j[0]..=l.j[1] {
                    for k in l.k[0]..=l.k[1] {
                        out.push(LatticePoint { tag: IndexTag::Affine { j, k, eps }, point: l.point(j, k, eps) });
                    }
                }
            }
        }
        Lattice::Tf(t) => {
            for k in t.k[0]..=t.k[1] {
                for l in t.l[0]..=t.l[1] {
                    out.push(LatticePoint { tag: IndexTag::Tf { k, l }, point: t.point(k, l) });
                }
            }
        }
        Lattice::Explicit { points } => {
            for (i, p) in points.iter().enumerate() {
                out.push(LatticePoint { tag: IndexTag::Explicit { i }, point: p.clone() });
            }
        }
    }
    Ok(out)
}

fn check_groups(lat: &Lattice, u: &NeighborhoodSpec) -> Result<()> {
    u.validate()?;
    if lat.group() != u.group() {
        return Err(CoorbitError::GroupMismatch(format!(
            "family on {:?}, neighbourhood on {:?}",
            lat.group(),
            u.group()
        )));
    }
    Ok(())
}

/// Indices of the family members `x_i` with `x_i^-1 y` in `U`, ascending.
fn covering(lat: &Lattice, u: &NeighborhoodSpec, y: &GroupPoint) -> Vec<usize> {
    let hit = |i: usize| {
        let x = lat.point_at(i).expect("index in range").point;
        x.inv().mul(y).map(|p| u.contains(&p)).unwrap_or(false)
    };
    let mut out = Vec::new();
    match (lat, u, y) {
        (Lattice::Affine(l), NeighborhoodSpec::Affine { beta: bu, alpha: au, .. }, GroupPoint::Affine(p)) => {
            let eps: i8 = if p.a > 0.0 { 1 } else { -1 };
            let Some(si) = l.signs.iter().position(|s| *s == eps) else {
                return out;
            };
            let la = l.alpha.ln();
            let lj = p.a.abs().ln() / la;
            let half = 0.5 * au.ln() / la;
            let j_lo = ((lj - half - EDGE_TOL).ceil() as i64).max(l.j[0]);
            let j_hi = ((lj + half + EDGE_TOL).floor() as i64).min(l.j[1]);
            for j in j_lo..=j_hi {
                let bj = eps as f64 * p.b / l.alpha.powi(j as i32);
                let k_lo = (((bj - bu / 2.0) / l.beta - EDGE_TOL).ceil() as i64).max(l.k[0]);
                let k_hi = (((bj + bu / 2.0) / l.beta + EDGE_TOL).floor() as i64).min(l.k[1]);
                for k in k_lo..=k_hi {
                    let i = l.index(si, j, k);
                    if hit(i) {
                        out.push(i);
                    }
                }
            }
        }
        (Lattice::Tf(t), NeighborhoodSpec::Tf { beta_x, beta_w, .. }, _) => {
            let Some(q) = y.as_tf() else { return out };
            let inv = t.generator.inverse();
            let c = [inv[0][0] * q.x + inv[0][1] * q.omega, inv[1][0] * q.x + inv[1][1] * q.omega];
            let r = [beta_x / 2.0, beta_w / 2.0];
            let h = [inv[0][0].abs() * r[0] + inv[0][1].abs() * r[1], inv[1][0].abs() * r[0] + inv[1][1].abs() * r[1]];
            let k_lo = ((c[0] - h[0] - EDGE_TOL).ceil() as i64).max(t.k[0]);
            let k_hi = ((c[0] + h[0] + EDGE_TOL).floor() as i64).min(t.k[1]);
            let l_lo = ((c[1] - h[1] - EDGE_TOL).ceil() as i64).max(t.l[0]);
            let l_hi = ((c[1] + h[1] + EDGE_TOL).floor() as i64).min(t.l[1]);
            for k in k_lo..=k_hi {
                for l in l_lo..=l_hi {
                    let i = t.index(k, l);
                    if hit(i) {
                        out.push(i);
                    }
                }
            }
        }
        _ => out.extend((0..lat.len()).filter(|&i| hit(i))),
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub dense: bool,
    /// Lowest-index probe point not covered by any `x_i U`.
    pub witness: Option<GroupPoint>,
    pub probes: usize,
}

/// Checks that every probe point lies in some `x_i U`.
pub fn is_u_dense(lat: &Lattice, u: &NeighborhoodSpec, probe: &[GroupPoint]) -> Result<DensityReport> {
    check_groups(lat, u)?;
    lat.validate()?;
    let witness = probe.iter().find(|y| covering(lat, u, y).is_empty()).cloned();
    Ok(DensityReport { dense: witness.is_none(), witness, probes: probe.len() })
}

/// Quadrature nodes in the part of the chart a finite window can claim to
/// cover: for affine lattices, scales in `[alpha^(j_min + 1/2), alpha^(j_max - 1/2)]`
/// with `b / (eps alpha^j)` inside `beta [k_min, k_max]` on both neighbouring
/// levels; for plane lattices, the interior of the index window shrunk by one
/// step. Explicit families get every node.
pub fn density_probe(lat: &Lattice, quad: &GroupQuadrature) -> Result<Vec<GroupPoint>> {
    lat.validate()?;
    if lat.group() != quad.kind() {
        return Err(CoorbitError::GroupMismatch("probe chart and family live on different groups".into()));
    }
    let keep = |p: &GroupPoint| -> bool {
        match (lat, p) {
            (Lattice::Affine(l), GroupPoint::Affine(q)) => {
                let eps: i8 = if q.a > 0.0 { 1 } else { -1 };
                if !l.signs.contains(&eps) {
                    return false;
                }
                let lj = q.a.abs().ln() / l.alpha.ln();
                let lo = l.j[0] as f64 + 0.5 - EDGE_TOL;
                let hi = l.j[1] as f64 - 0.5 + EDGE_TOL;
                if lj < lo || lj > hi {
                    return false;
                }
                [lj.floor(), lj.ceil()].iter().all(|&j| {
                    let bj = eps as f64 * q.b / (l.alpha.powi(j as i32) * l.beta);
                    bj >= l.k[0] as f64 - EDGE_TOL && bj <= l.k[1] as f64 + EDGE_TOL
                })
            }
            (Lattice::Tf(t), _) => {
                let Some(q) = p.as_tf() else { return false };
                let inv = t.generator.inverse();
                let c0 = inv[0][0] * q.x + inv[0][1] * q.omega;
                let c1 = inv[1][0] * q.x + inv[1][1] * q.omega;
                c0 >= (t.k[0] + 1) as f64 - EDGE_TOL
                    && c0 <= (t.k[1] - 1) as f64 + EDGE_TOL
                    && c1 >= (t.l[0] + 1) as f64 - EDGE_TOL
                    && c1 <= (t.l[1] - 1) as f64 + EDGE_TOL
            }
            _ => true,
        }
    };
    Ok((0..quad.len()).map(|i| quad.point(i)).filter(|p| keep(p)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// Largest number of indices `j` with `x_i K` meeting `x_j K`, self included.
    pub count: usize,
    /// Closed-form upper bound for structured lattices, if one is known.
    pub bound: Option<usize>,
    pub separated: bool,
}

/// `g` in `K K^-1`, using the closed form for rectangles and boxes.
fn in_product_set(k: &NeighborhoodSpec, g: &GroupPoint) -> bool {
    let tol = 1e-12;
    match (*k, g) {
        (NeighborhoodSpec::Affine { beta, alpha, .. }, GroupPoint::Affine(p)) => {
            // k1 k2^-1 = (b1 - s b2, s) with s = a1 / a2 in [1/alpha, alpha].
            p.a >= (1.0 - tol) / alpha && p.a <= alpha * (1.0 + tol) && p.b.abs() <= beta * (1.0 + p.a) / 2.0 + tol
        }
        (NeighborhoodSpec::Tf { beta_x, beta_w, .. }, GroupPoint::TfPlane(p)) => {
            p.x.abs() <= beta_x + tol && p.omega.abs() <= beta_w + tol
        }
        _ => false,
    }
}

fn separation_bound(lat: &Lattice, k: &NeighborhoodSpec) -> Option<usize> {
    match (lat, *k) {
        (Lattice::Affine(l), NeighborhoodSpec::Affine { beta, alpha, .. }) => {
            // K K^-1 sits in [-beta_L M, beta_L M] x {alpha_L^-N <= |a| <= alpha_L^N}.
            let n = (alpha.ln() / l.alpha.ln() - 1e-12).ceil().max(0.0) as usize;
            let m = (beta * (1.0 + alpha) / (2.0 * l.beta) - 1e-12).ceil().max(0.0) as usize;
            Some(2 * (2 * n + 1) * (2 * m + 1))
        }
        (Lattice::Tf(t), NeighborhoodSpec::Tf { beta_x, beta_w, .. }) => {
            let inv = t.generator.inverse();
            let h0 = inv[0][0].abs() * beta_x + inv[0][1].abs() * beta_w;
            let h1 = inv[1][0].abs() * beta_x + inv[1][1].abs() * beta_w;
            Some((2 * h0.floor() as usize + 1) * (2 * h1.floor() as usize + 1))
        }
        _ => None,
    }
}

/// Maximal overlap count of the translates `x_i K`.
pub fn is_relatively_separated(lat: &Lattice, k: &NeighborhoodSpec) -> Result<SeparationReport> {
    check_groups(lat, k)?;
    let pts = lattice_points(lat)?;
    let inv: Vec<GroupPoint> = pts.iter().map(|p| p.point.inv()).collect();
    let mut count = 0usize;
    for xi in &pts {
        let mut c = 0usize;
        for xj_inv in &inv {
            if in_product_set(k, &xj_inv.mul(&xi.point)?) {
                c += 1;
            }
        }
        count = count.max(c);
    }
    let bound = separation_bound(lat, k);
    Ok(SeparationReport { count, bound, separated: bound.map_or(true, |b| count <= b) })
}

/// Values attached to the points of a family, in [`lattice_points`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSequence {
    pub lattice: Lattice,
    pub values: Vec<Complex64>,
    /// `false` where the point fell outside the chart and the value was set to 0.
    pub in_chart: Vec<bool>,
    pub coverage: f64,
}

impl SampledSequence {
    pub fn new(lat: &Lattice, values: Vec<Complex64>) -> Result<Self> {
        lat.validate()?;
        let n = lat.len();
        if n != values.len() {
            return Err(CoorbitError::DimensionMismatch { left: n, right: values.len() });
        }
        Ok(SampledSequence { lattice: lat.clone(), values, in_chart: vec![true; n], coverage: 1.0 })
    }

    pub fn point(&self, i: usize) -> LatticePoint {
        self.lattice.point_at(i).expect("index in range")
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(CoorbitError::DimensionMismatch { left: self.values.len(), right: values.len() });
        }
        Ok(SampledSequence { values, ..self.clone() })
    }
}

/// `F(x_i)` by chart interpolation.
pub fn sample_field(f: &GroupField, lat: &Lattice) -> Result<SampledSequence> {
    if lat.group() != f.quad().kind() {
        return Err(CoorbitError::GroupMismatch("family and field live on different groups".into()));
    }
    lat.validate()?;
    let n = lat.len();
    let mut values = Vec::with_capacity(n);
    let mut in_chart = Vec::with_capacity(n);
    for i in 0..n {
        let v = f.value_at(&lat.point_at(i).expect("index in range").point);
        in_chart.push(v.is_some());
        values.push(v.unwrap_or(ZERO));
    }
    let hits = in_chart.iter().filter(|b| **b).count();
    let coverage = hits as f64 / n.max(1) as f64;
    Ok(SampledSequence { lattice: lat.clone(), values, in_chart, coverage })
}

/// `(sum |c_i|^p m(x_i)^p)^(1/p)`, max for `p = inf`.
pub fn seq_lpm_norm(c: &SampledSequence, p: f64, m: &WeightSpec) -> Result<f64> {
    check_exponent(p)?;
    let mut acc = 0.0f64;
    for (lp, z) in c.points().zip(&c.values) {
        let v = z.norm() * m.eval(&lp.point)?;
        if p.is_infinite() {
            acc = acc.max(v);
        } else {
            acc += v.powf(p);
        }
    }
    Ok(if p.is_infinite() { acc } else { acc.powf(1.0 / p) })
}

/// Bounds `a m(x) <= m(x u) <= b m(x)` for `u` in `U`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalWeightBounds {
    pub lower: f64,
    pub upper: f64,
    /// Probe estimate rather than closed form.
    pub heuristic: bool,
}

pub fn local_weight_bounds(m: &WeightSpec, u: &NeighborhoodSpec) -> Result<LocalWeightBounds> {
    u.validate()?;
    if m.group() != u.group() {
        return Err(CoorbitError::GroupMismatch("weight and neighbourhood live on different groups".into()));
    }
    let closed = |b: f64| LocalWeightBounds { lower: 1.0 / b, upper: b, heuristic: false };
    match (m, *u) {
        (WeightSpec::PowerScale { s }, NeighborhoodSpec::Affine { alpha, .. }) => Ok(closed(alpha.powf(s.abs() / 2.0))),
        (WeightSpec::SymmetricPower { rho }, NeighborhoodSpec::Affine { alpha, .. }) => Ok(closed(alpha.powf(rho / 2.0))),
        (WeightSpec::PolyTf { r, s }, NeighborhoodSpec::Tf { beta_x, beta_w, .. }) => {
            Ok(closed((1.0 + beta_x / 2.0).powf(*r) * (1.0 + beta_w / 2.0).powf(*s)))
        }
        _ => {
            // Ratios m(x u) / m(x) over a seeded box of base points and the U samples.
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
            let samples = u.samples();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..256 {
                let x = match u.group() {
                    GroupKind::Affine => GroupPoint::affine(rng.gen_range(-10.0..10.0), rng.gen_range(-3.0f64..3.0).exp()),
                    GroupKind::TfPlane => GroupPoint::tf(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)),
                };
                let mx = m.eval(&x)?;
                for s in &samples {
                    let r = m.eval(&x.mul(s)?)? / mx;
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            Ok(LocalWeightBounds { lower: lo, upper: hi, heuristic: true })
        }
    }
}

/// Four points just off `y` in the quadrant directions of the chart
/// coordinates. Averaging a piecewise-constant integrand over them splits
/// nodes on tile edges between the neighbouring tiles.
fn quadrant_points(quad: &GroupQuadrature, y: &GroupPoint) -> [GroupPoint; 4] {
    const NUDGE: f64 = 1e-6;
    let (dx, dy) = match quad {
        GroupQuadrature::Affine(c) => (c.db() * NUDGE, c.du() * NUDGE),
        GroupQuadrature::TfPlane(c) => (c.dx() * NUDGE, c.dw() * NUDGE),
    };
    let at = |sx: f64, sy: f64| match y {
        GroupPoint::Affine(p) => GroupPoint::affine(p.b + sx * dx, p.a * (sy * dy).exp()),
        _ => {
            let p = y.as_tf().expect("plane point");
            GroupPoint::tf(p.x + sx * dx, p.omega + sy * dy)
        }
    };
    [at(-1.0, -1.0), at(-1.0, 1.0), at(1.0, -1.0), at(1.0, 1.0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalenceReport {
    /// `|sum |c_i| chi_{x_i U}|_{p,m} / |c|_{p,m~}`; `None` for the zero sequence.
    pub ratio: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    /// Largest number of tiles containing a point just off a chart node,
    /// i.e. the overlap away from tile edges.
    pub overlap: usize,
    pub tile_mass: f64,
    pub heuristic: bool,
    pub pass: bool,
}

/// Compares the continuous norm of `sum |c_i| chi_{x_i U}` on `quad` with the
/// discrete norm of `c`. The window is `[a1 a2 E^(1/p), b1 b2 E^(1/p)]` with
/// `E = mu(U)`, `a1 = 1`, `b1 = N^(1 - 1/p)` for the overlap count `N`, and
/// `a2, b2` from [`local_weight_bounds`]; for `p = inf` it is `[a2, N b2]`.
pub fn norm_equivalence_check(
    c: &SampledSequence,
    p: f64,
    m: &WeightSpec,
    u: &NeighborhoodSpec,
    quad: &GroupQuadrature,
) -> Result<NormEquivalenceReport> {
    check_exponent(p)?;
    u.validate()?;
    if quad.kind() != u.group() || m.group() != u.group() {
        return Err(CoorbitError::GroupMismatch("chart, weight and neighbourhood must share a group".into()));
    }
    let lw = local_weight_bounds(m, u)?;
    let e = u.haar_mass();
    let mv = m.on_nodes(quad)?;
    let inv: Vec<GroupPoint> = c.points().map(|lp| lp.point.inv()).collect();
    // integrand[node] = mean over quadrants of (sum_i |c_i| chi_{x_i U})^p, or the max for p = inf
    let mut integrand = vec![0.0f64; quad.len()];
    let mut overlap = 0usize;
    for (node, out) in integrand.iter_mut().enumerate() {
        let y = quad.point(node);
        for yq in quadrant_points(quad, &y) {
            let mut f = 0.0;
            let mut hits = 0usize;
            for (xi_inv, z) in inv.iter().zip(&c.values) {
                if u.contains(&xi_inv.mul(&yq)?) {
                    hits += 1;
                    f += z.norm();
                }
            }
            overlap = overlap.max(hits);
            if p.is_infinite() {
                *out = out.max(f);
            } else {
                *out += f.powf(p) / 4.0;
            }
        }
    }
    let n = overlap.max(1) as f64;
    let (lower, upper) = if p.is_infinite() {
        (lw.lower, n * lw.upper)
    } else {
        let ep = e.powf(1.0 / p);
        (lw.lower * ep, n.powf(1.0 - 1.0 / p) * lw.upper * ep)
    };
    let cont = if p.is_infinite() {
        integrand.iter().zip(&mv).map(|(s, m)| s * m).fold(0.0, f64::max)
    } else {
        integrand
            .iter()
            .zip(&mv)
            .enumerate()
            .map(|(i, (s, m))| s * m.powf(p) * quad.weight(i))
            .sum::<f64>()
            .powf(1.0 / p)
    };
    let disc = seq_lpm_norm(c, p, m)?;
    let ratio = if disc > 0.0 { Some(cont / disc) } else { None };
    let pass = ratio.map_or(true, |r| r >= lower && r <= upper);
    Ok(NormEquivalenceReport { ratio, lower, upper, overlap, tile_mass: e, heuristic: lw.heuristic, pass })
}

/// `phi_i = chi_{x_i U} / sum_j chi_{x_j U}`, evaluated on demand.
#[derive(Clone, Debug)]
pub struct Bupu {
    lattice: Lattice,
    u: NeighborhoodSpec,
}

/// Builds the partition after checking density on `probe`.
pub fn build_bupu(lat: &Lattice, u: &NeighborhoodSpec, probe: &[GroupPoint]) -> Result<Bupu> {
    let report = is_u_dense(lat, u, probe)?;
    if let Some(witness) = report.witness {
        return Err(CoorbitError::NotDense { witness });
    }
    Ok(Bupu { lattice: lat.clone(), u: *u })
}

impl Bupu {
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn neighborhood(&self) -> &NeighborhoodSpec {
        &self.u
    }

    /// Nonzero `(i, phi_i(y))`; empty where no tile covers `y`.
    pub fn weights_at(&self, y: &GroupPoint) -> Vec<(usize, f64)> {
        let idx = covering(&self.lattice, &self.u, y);
        let w = 1.0 / idx.len().max(1) as f64;
        idx.into_iter().map(|i| (i, w)).collect()
    }
}

/// `sum_i c_i phi_i` at every node of `quad`.
pub fn bupu_synthesize(c: &SampledSequence, bupu: &Bupu, quad: &std::sync::Arc<GroupQuadrature>) -> Result<GroupField> {
    if c.len() != bupu.len() {
        return Err(CoorbitError::DimensionMismatch { left: bupu.len(), right: c.len() });
    }
    if c.lattice != bupu.lattice {
        return Err(invalid("sequence indices do not match the partition"));
    }
    if quad.kind() != bupu.u.group() {
        return Err(CoorbitError::GroupMismatch("chart and partition live on different groups".into()));
    }
    let values = (0..quad.len())
        .map(|n| {
            bupu.weights_at(&quad.point(n)).into_iter().map(|(i, w)| c.values[i] * w).sum::<Complex64>()
        })
        .collect();
    GroupField::new(quad.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_core::build_affine_quadrature;
    use crate::group_core::build_tf_quadrature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn lam12() -> Lattice {
        Lattice::Affine(AffineLattice::new(1.0, 2.0, 5, 64).unwrap())
    }

    fn a_rect(beta: f64, alpha: f64) -> NeighborhoodSpec {
        NeighborhoodSpec::affine(beta, alpha).unwrap()
    }

    #[test]
    fn point_at_matches_listing() {
        let fams = [
            lam12(),
            Lattice::Tf(TfLattice::matrix(0.5, [[1.0, 0.3], [0.0, 1.0]], 3, 2).unwrap()),
            Lattice::Explicit { points: vec![GroupPoint::affine(1.0, 2.0), GroupPoint::affine(0.0, -1.0)] },
        ];
        for lat in &fams {
            let pts = lattice_points(lat).unwrap();
            for (i, p) in pts.iter().enumerate() {
                assert_eq!(lat.point_at(i).as_ref(), Some(p));
            }
            assert!(lat.point_at(pts.len()).is_none());
        }
    }

    #[test]
    fn lattice_point_examples() {
        let Lattice::Affine(l) = lam12() else { unreachable!() };
        assert_eq!(l.point(1, 3, 1), GroupPoint::affine(6.0, 2.0));
        assert_eq!(l.point(0, 0, 1), GroupPoint::affine(0.0, 1.0));
        assert_eq!(l.point(-1, 1, -1), GroupPoint::affine(-0.5, -0.5));
        let pts = lattice_points(&lam12()).unwrap();
        assert_eq!(pts.len(), 2 * 11 * 129);
        for (i, p) in pts.iter().enumerate() {
            let IndexTag::Affine { j, k, eps } = p.tag else { panic!() };
            assert_eq!(p.point, l.point(j, k, eps));
            assert_eq!(l.index(if eps == 1 { 0 } else { 1 }, j, k), i);
        }
        assert!(AffineLattice::new(1.0, 1.0, 1, 1).is_err());
        assert!(TfLattice::matrix(1.0, [[1.0, 2.0], [2.0, 4.0]], 2, 2).is_err());
        let json = r#"{"type":"affine","alpha":2.0,"beta":1.0,"j":[-5,5],"k":[-64,64],"signs":[1,-1]}"#;
        let back: Lattice = serde_json::from_str(json).unwrap();
        assert_eq!(back, lam12());
    }

    #[test]
    fn affine_density() {
        let q = GroupQuadrature::desk_default();
        let probe = density_probe(&lam12(), &q).unwrap();
        assert!(probe.len() > 10_000);
        let r = is_u_dense(&lam12(), &a_rect(1.0, 2.0), &probe).unwrap();
        assert!(r.dense, "{r:?}");

        let sparse = Lattice::Affine(AffineLattice::new(2.0, 4.0, 3, 64).unwrap());
        let probe = density_probe(&sparse, &q).unwrap();
        let r = is_u_dense(&sparse, &a_rect(1.0, 2.0), &probe).unwrap();
        assert!(!r.dense);
        // beta = 2 also leaves gaps in b; on the line b = 0 only the scale gaps remain.
        let line: Vec<GroupPoint> = probe.into_iter().filter(|p| p.as_affine().unwrap().b == 0.0).collect();
        let r = is_u_dense(&sparse, &a_rect(1.0, 2.0), &line).unwrap();
        assert!(!r.dense);
        let w = r.witness.unwrap().as_affine().unwrap();
        let j = (w.a.abs().ln() / 4f64.ln()).floor() as i32;
        let lo = 2f64.sqrt() * 4f64.powi(j);
        assert!(w.a.abs() > lo && w.a.abs() < 4f64.powi(j) * 4.0 / 2f64.sqrt(), "{w:?}");

        let single = Lattice::Explicit { points: vec![GroupPoint::affine(0.0, 1.0)] };
        let probe = vec![GroupPoint::affine(0.0, 1.0), GroupPoint::affine(0.3, 1.0)];
        let r = is_u_dense(&single, &a_rect(0.01, 1.01), &probe).unwrap();
        assert!(!r.dense);
        assert_eq!(r.witness, Some(GroupPoint::affine(0.3, 1.0)));
    }

    #[test]
    fn density_is_monotone_in_u() {
        let q = Arc::new(build_affine_quadrature(-8.0, 8.0, 256, 0.25, 4.0, 33, &[1, -1]).unwrap());
        let lat = Lattice::Affine(AffineLattice::new(1.0, 2.0, 3, 16).unwrap());
        let probe = density_probe(&lat, &q).unwrap();
        let mut was = false;
        for (b, a) in [(0.5, 1.5), (0.9, 1.9), (1.0, 2.0), (1.5, 2.5), (2.0, 4.0)] {
            let d = is_u_dense(&lat, &a_rect(b, a), &probe).unwrap().dense;
            assert!(d || !was);
            was = d;
        }
        assert!(was);
    }

    #[test]
    fn separation() {
        let r = is_relatively_separated(&Lattice::Affine(AffineLattice::new(1.0, 2.0, 3, 16).unwrap()), &a_rect(1.0, 2.0))
            .unwrap();
        assert_eq!(r.bound, Some(30));
        assert!(r.separated && r.count >= 1, "{r:?}");

        let dup = Lattice::Explicit {
            points: vec![GroupPoint::affine(0.0, 1.0), GroupPoint::affine(0.0, 1.0), GroupPoint::affine(5.0, 1.0)],
        };
        for beta in [1.0, 0.1, 0.001] {
            let r = is_relatively_separated(&dup, &a_rect(beta, 1.0 + beta)).unwrap();
            assert!(r.count >= 2);
        }

        for c in [0.25, 0.5, 1.0, 2.0, 3.7] {
            let lat = Lattice::Tf(TfLattice::matrix(c, [[1.0, 0.5], [0.0, 1.0]], 6, 6).unwrap());
            let r = is_relatively_separated(&lat, &NeighborhoodSpec::tf(1.0, 1.0).unwrap()).unwrap();
            assert!(r.separated, "c = {c}: {r:?}");
        }
    }

    #[test]
    fn local_finiteness_against_separation() {
        let lat = Lattice::Affine(AffineLattice::new(1.0, 2.0, 2, 8).unwrap());
        let u = a_rect(1.0, 2.0);
        let sep = is_relatively_separated(&lat, &u).unwrap();
        let q = build_affine_quadrature(-8.0, 8.0, 128, 0.25, 4.0, 33, &[1, -1]).unwrap();
        for n in 0..q.len() {
            assert!(covering(&lat, &u, &q.point(n)).len() <= sep.count);
        }
    }

    #[test]
    fn sampling() {
        let q = Arc::new(build_affine_quadrature(-4.0, 4.0, 64, 0.25, 4.0, 17, &[1, -1]).unwrap());
        let lat = Lattice::Affine(AffineLattice::new(1.0, 2.0, 3, 8).unwrap());
        let c = GroupField::from_fn(q.clone(), |_| Complex64::new(1.5, -0.5));
        let s = sample_field(&c, &lat).unwrap();
        assert!(s.coverage > 0.0 && s.coverage < 1.0);
        for (v, inside) in s.values.iter().zip(&s.in_chart) {
            if *inside {
                assert!((v - Complex64::new(1.5, -0.5)).norm() < 1e-12);
            } else {
                assert_eq!(*v, ZERO);
            }
        }
        let m1 = WeightSpec::power_scale(1.0);
        let zero = SampledSequence::new(&lat, vec![ZERO; lat.len()]).unwrap();
        assert_eq!(seq_lpm_norm(&zero, 2.0, &m1).unwrap(), 0.0);
        let ones = SampledSequence::new(&lat, vec![Complex64::new(1.0, 0.0); lat.len()]).unwrap();
        for (lp, _) in ones.points().zip(&ones.values) {
            let IndexTag::Affine { j, .. } = lp.tag else { panic!() };
            assert!((m1.eval(&lp.point).unwrap() - 2f64.powi(-j as i32)).abs() < 1e-12);
        }
        let n = seq_lpm_norm(&ones, 2.0, &m1).unwrap();
        let n3 = seq_lpm_norm(&ones.with_values(vec![Complex64::new(0.0, 3.0); lat.len()]).unwrap(), 2.0, &m1).unwrap();
        assert!((n3 - 3.0 * n).abs() < 1e-12 * n3);
    }

    fn tiled_chart() -> GroupQuadrature {
        // Tile edges of Lambda(1,2) for |j| <= 2 land on nodes.
        build_affine_quadrature(-8.0, 8.0, 512, 1.0 / 16.0, 16.0, 65, &[1, -1]).unwrap()
    }

    #[test]
    fn norm_equivalence_single_tile() {
        let q = tiled_chart();
        let lat = Lattice::Affine(AffineLattice::new(1.0, 2.0, 2, 2).unwrap());
        let u = a_rect(1.0, 2.0);
        let m1 = WeightSpec::power_scale(1.0);
        let pts = lattice_points(&lat).unwrap();
        let mut v = vec![ZERO; lat.len()];
        let i = pts.iter().position(|p| p.tag == IndexTag::Affine { j: 1, k: -1, eps: 1 }).unwrap();
        v[i] = Complex64::new(0.0, 2.0);
        let s = SampledSequence::new(&lat, v).unwrap();
        let r = norm_equivalence_check(&s, 2.0, &m1, &u, &q).unwrap();
        // One tile: ratio^2 = int_{x_i U} m^2 / m(x_i)^2 = beta int a^-2 da/a^2 over [2^-1/2, 2^1/2].
        let lo = 2f64.powf(-0.5);
        let hi = 2f64.sqrt();
        let want = ((lo.powi(-3) - hi.powi(-3)) / 3.0).sqrt();
        // Trapezoid error in u is about 9 du^2 / 24 relative here.
        assert!((r.ratio.unwrap() - want).abs() < 5e-3 * want, "{r:?} vs {want}");
        assert!(r.pass);
        let zero = SampledSequence::new(&lat, vec![ZERO; lat.len()]).unwrap();
        let r = norm_equivalence_check(&zero, 2.0, &m1, &u, &q).unwrap();
        assert!(r.pass && r.ratio.is_none());
    }

    #[test]
    fn norm_equivalence_random() {
        let q = tiled_chart();
        let lat = Lattice::Affine(AffineLattice::new(1.0, 2.0, 2, 3).unwrap());
        let u = a_rect(1.0, 2.0);
        let m1 = WeightSpec::power_scale(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let v = (0..lat.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let s = SampledSequence::new(&lat, v).unwrap();
            let r = norm_equivalence_check(&s, 2.0, &m1, &u, &q).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn bupu_partition() {
        let lat = Lattice::Affine(AffineLattice::new(1.0, 2.0, 3, 16).unwrap());
        let u = a_rect(1.0, 2.0);
        let q = Arc::new(build_affine_quadrature(-8.0, 8.0, 256, 0.25, 4.0, 33, &[1, -1]).unwrap());
        let probe = density_probe(&lat, &q).unwrap();
        let bupu = build_bupu(&lat, &u, &probe).unwrap();
        // Interior point of one tile.
        let w = bupu.weights_at(&GroupPoint::affine(0.1, 1.1));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].1, 1.0);
        // Shared edge b = 1/2 at a = 1.
        let w = bupu.weights_at(&GroupPoint::affine(0.5, 1.0));
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|(_, v)| *v == 0.5));

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let a = rng.gen_range(2f64.powf(-2.5).ln()..2f64.powf(2.5).ln()).exp();
            let b = rng.gen_range(-2.0..2.0) * a;
            let a = if rng.gen_bool(0.5) { a } else { -a };
            let ws = bupu.weights_at(&GroupPoint::affine(b, a));
            let s: f64 = ws.iter().map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(ws.iter().all(|(_, v)| (0.0..=1.0).contains(v)));
            for (i, _) in ws {
                let p = bupu.lattice().point_at(i).unwrap().point.inv().mul(&GroupPoint::affine(b, a)).unwrap();
                assert!(u.contains(&p));
            }
        }

        let zero = SampledSequence::new(&lat, vec![ZERO; lat.len()]).unwrap();
        let f = bupu_synthesize(&zero, &bupu, &q).unwrap();
        assert!(f.values().iter().all(|z| *z == ZERO));
        let mut v = vec![ZERO; lat.len()];
        let i = lattice_points(&lat).unwrap().iter().position(|p| p.tag == IndexTag::Affine { j: 0, k: 0, eps: 1 }).unwrap();
        v[i] = Complex64::new(1.0, 0.0);
        let f = bupu_synthesize(&SampledSequence::new(&lat, v).unwrap(), &bupu, &q).unwrap();
        for n in 0..q.len() {
            let phi = bupu.weights_at(&q.point(n)).into_iter().find(|(j, _)| *j == i).map_or(0.0, |(_, w)| w);
            assert_eq!(f.values()[n].re, phi);
        }

        let sparse = Lattice::Affine(AffineLattice::new(2.0, 4.0, 2, 16).unwrap());
        let probe = density_probe(&sparse, &q).unwrap();
        assert!(matches!(build_bupu(&sparse, &u, &probe), Err(CoorbitError::NotDense { .. })));
    }

    #[test]
    fn tf_density_and_bupu() {
        let lat = Lattice::Tf(TfLattice::separable(0.5, 0.5, 12, 12).unwrap());
        let q = build_tf_quadrature(-4.0, 0.125, 64, -4.0, 0.125, 64).unwrap();
        let probe = density_probe(&lat, &q).unwrap();
        assert!(!probe.is_empty());
        assert!(is_u_dense(&lat, &NeighborhoodSpec::tf(0.5, 0.5).unwrap(), &probe).unwrap().dense);
        assert!(!is_u_dense(&lat, &NeighborhoodSpec::tf(0.3, 0.5).unwrap(), &probe).unwrap().dense);
        let sheared = Lattice::Tf(TfLattice::matrix(0.5, [[1.0, 0.5], [0.0, 1.0]], 12, 12).unwrap());
        let probe = density_probe(&sheared, &q).unwrap();
        assert!(is_u_dense(&sheared, &NeighborhoodSpec::tf(1.0, 0.5).unwrap(), &probe).unwrap().dense);
    }
}
