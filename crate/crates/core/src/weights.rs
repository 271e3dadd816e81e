//! Weight families and control-weight checks.
//!
//! * `PowerScale(s)`: `m_s(b, a) = |a|^-s` on the affine group.
//! * `SymmetricPower(rho)`: `w_rho(b, a) = |a|^rho + |a|^-rho`.
//! * `PolyTf(r, s)`: `v_{r,s}(x, w) = (1 + |x|)^r (1 + |w|)^s` on the plane.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, CoorbitError, Result};
use crate::group_core::{GroupKind, GroupPoint, GroupQuadrature};

/// Closure-backed weight; has no closed-form control check and does not serialize.
#[derive(Clone)]
pub struct CustomWeight {
    pub group: GroupKind,
    pub name: String,
    pub eval: Arc<dyn Fn(&GroupPoint) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomWeight").field("group", &self.group).field("name", &self.name).finish()
    }
}

#[derive(Clone, Debug)]
pub enum WeightSpec {
    PowerScale { s: f64 },
    SymmetricPower { rho: f64 },
    PolyTf { r: f64, s: f64 },
    Custom(CustomWeight),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum WeightFile {
    PowerScale { s: f64 },
    SymmetricPower { rho: f64 },
    PolyTf { r: f64, s: f64 },
}

impl Serialize for WeightSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let f = match *self {
            WeightSpec::PowerScale { s } => WeightFile::PowerScale { s },
            WeightSpec::SymmetricPower { rho } => WeightFile::SymmetricPower { rho },
            WeightSpec::PolyTf { r, s } => WeightFile::PolyTf { r, s },
            WeightSpec::Custom(ref c) => {
                return Err(serde::ser::Error::custom(format!("custom weight '{}' cannot be serialized", c.name)))
            }
        };
        f.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for WeightSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let w = match WeightFile::deserialize(de)? {
            WeightFile::PowerScale { s } => WeightSpec::PowerScale { s },
            WeightFile::SymmetricPower { rho } => WeightSpec::SymmetricPower { rho },
            WeightFile::PolyTf { r, s } => WeightSpec::PolyTf { r, s },
        };
        w.validate().map_err(serde::de::Error::custom)?;
        Ok(w)
    }
}

impl PartialEq for WeightSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (WeightSpec::PowerScale { s: a }, WeightSpec::PowerScale { s: b }) => a == b,
            (WeightSpec::SymmetricPower { rho: a }, WeightSpec::SymmetricPower { rho: b }) => a == b,
            (WeightSpec::PolyTf { r: a, s: b }, WeightSpec::PolyTf { r: c, s: d }) => a == c && b == d,
            (WeightSpec::Custom(a), WeightSpec::Custom(b)) => Arc::ptr_eq(&a.eval, &b.eval),
            _ => false,
        }
    }
}

impl WeightSpec {
    pub fn power_scale(s: f64) -> Self {
        WeightSpec::PowerScale { s }
    }

    pub fn symmetric_power(rho: f64) -> Result<Self> {
        let w = WeightSpec::SymmetricPower { rho };
        w.validate()?;
        Ok(w)
    }

    pub fn poly_tf(r: f64, s: f64) -> Result<Self> {
        let w = WeightSpec::PolyTf { r, s };
        w.validate()?;
        Ok(w)
    }

    /// The constant weight 1 on the given group.
    pub fn unit(group: GroupKind) -> Self {
        match group {
            GroupKind::Affine => WeightSpec::PowerScale { s: 0.0 },
            GroupKind::TfPlane => WeightSpec::PolyTf { r: 0.0, s: 0.0 },
        }
    }

    pub fn custom(group: GroupKind, name: &str, f: impl Fn(&GroupPoint) -> f64 + Send + Sync + 'static) -> Self {
        WeightSpec::Custom(CustomWeight { group, name: name.to_string(), eval: Arc::new(f) })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::PowerScale { s } if !s.is_finite() => Err(invalid("s must be finite")),
            WeightSpec::SymmetricPower { rho } if !(rho >= 0.0 && rho.is_finite()) => {
                Err(invalid(format!("rho must be >= 0, got {rho}")))
            }
            WeightSpec::PolyTf { r, s } if !(r >= 0.0 && s >= 0.0 && r.is_finite() && s.is_finite()) => {
                Err(invalid(format!("r and s must be >= 0, got ({r}, {s})")))
            }
            _ => Ok(()),
        }
    }

    pub fn group(&self) -> GroupKind {
        match self {
            WeightSpec::PowerScale { .. } | WeightSpec::SymmetricPower { .. } => GroupKind::Affine,
            WeightSpec::PolyTf { .. } => GroupKind::TfPlane,
            WeightSpec::Custom(c) => c.group,
        }
    }

    /// `1 / m` for the closed-form families where it is again in the family.
    pub fn reciprocal(&self) -> Result<Self> {
        match *self {
            WeightSpec::PowerScale { s } => Ok(WeightSpec::PowerScale { s: -s }),
            WeightSpec::Custom(ref c) => {
                let f = c.eval.clone();
                Ok(WeightSpec::custom(c.group, &format!("1/{}", c.name), move |p| 1.0 / f(p)))
            }
            ref w => {
                let w = w.clone();
                Ok(WeightSpec::custom(w.group(), "reciprocal", move |p| 1.0 / w.eval(p).unwrap_or(f64::NAN)))
            }
        }
    }

    pub fn eval(&self, x: &GroupPoint) -> Result<f64> {
        let mismatch = || CoorbitError::GroupMismatch(format!("weight on {:?} evaluated at {x:?}", self.group()));
        match self {
            WeightSpec::PowerScale { .. } | WeightSpec::SymmetricPower { .. } => {
                let p = x.as_affine().ok_or_else(mismatch)?;
                Ok(self.eval_scale(p.a))
            }
            WeightSpec::PolyTf { r, s } => {
                let (nx, nw) = match x {
                    GroupPoint::TfPlane(p) => (p.x.abs(), p.omega.abs()),
                    GroupPoint::Heisenberg(h) => (
                        h.x.iter().map(|v| v * v).sum::<f64>().sqrt(),
                        h.omega.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    ),
                    GroupPoint::Affine(_) => return Err(mismatch()),
                };
                Ok((1.0 + nx).powf(*r) * (1.0 + nw).powf(*s))
            }
            WeightSpec::Custom(c) => {
                let ok = match c.group {
                    GroupKind::Affine => x.as_affine().is_some(),
                    GroupKind::TfPlane => x.as_tf().is_some(),
                };
                if !ok {
                    return Err(mismatch());
                }
                Ok((c.eval)(x))
            }
        }
    }

    /// Affine families depend on the scale only.
    pub(crate) fn eval_scale(&self, a: f64) -> f64 {
        let a = a.abs();
        match *self {
            WeightSpec::PowerScale { s } => a.powf(-s),
            WeightSpec::SymmetricPower { rho } => a.powf(rho) + a.powf(-rho),
            _ => f64::NAN,
        }
    }

    /// Weight at every node of a quadrature, in node order.
    pub fn on_nodes(&self, quad: &GroupQuadrature) -> Result<Vec<f64>> {
        if quad.kind() != self.group() {
            return Err(CoorbitError::GroupMismatch(format!(
                "{:?} weight on a {:?} quadrature",
                self.group(),
                quad.kind()
            )));
        }
        match (self, quad) {
            (WeightSpec::PowerScale { .. } | WeightSpec::SymmetricPower { .. }, GroupQuadrature::Affine(c)) => {
                let mut out = Vec::with_capacity(quad.len());
                for row in 0..c.n_rows() {
                    let v = self.eval_scale(c.row_scale(row));
                    out.extend(std::iter::repeat(v).take(c.n_b()));
                }
                Ok(out)
            }
            _ => (0..quad.len()).map(|i| self.eval(&quad.point(i))).collect(),
        }
    }
}

pub fn eval_weight(w: &WeightSpec, x: &GroupPoint) -> Result<f64> {
    w.eval(x)
}

/// `1/p` with `1/inf = 0`.
pub fn recip(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Conjugate exponent `q` with `1/p + 1/q = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("exponent must lie in [1, inf], got {p}")))
    }
}

/// Closed-form p-control test.
///
/// Affine: `w_rho` controls `m_s` iff `rho >= |s| + max(1/p, 1/q)`.
/// Plane: `v_{r,s}` controls `v_{r0,s0}` iff `r >= r0` and `s >= s0`.
pub fn is_p_control(w: &WeightSpec, m: &WeightSpec, p: f64) -> Result<bool> {
    check_exponent(p)?;
    match (w, m) {
        (WeightSpec::SymmetricPower { rho }, WeightSpec::PowerScale { s }) => {
            let q = conjugate_exponent(p);
            Ok(*rho >= s.abs() + recip(p).max(recip(q)))
        }
        (WeightSpec::PolyTf { r, s }, WeightSpec::PolyTf { r: r0, s: s0 }) => Ok(r >= r0 && s >= s0),
        (WeightSpec::Custom(_), _) | (_, WeightSpec::Custom(_)) => {
            Err(CoorbitError::NoClosedForm("custom weights; use the probes".into()))
        }
        _ if w.group() != m.group() => Err(CoorbitError::GroupMismatch("weights live on different groups".into())),
        _ => Err(CoorbitError::NoClosedForm(format!("control pair {w:?} / {m:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub samples: usize,
    /// Largest observed `w(xy) / (w(x) w(y))`.
    pub max_ratio: f64,
    pub worst_pair: Option<(GroupPoint, GroupPoint)>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModerateReport {
    pub samples: usize,
    /// Largest `m(xy) / (w(x) m(y))`.
    pub max_left: f64,
    /// Largest `m(xy) / (m(x) w(y))`.
    pub max_right: f64,
    pub pass: bool,
}

const PROBE_SLACK: f64 = 1e-12;

fn random_point(group: GroupKind, rng: &mut ChaCha8Rng) -> GroupPoint {
    match group {
        GroupKind::Affine => {
            let b = rng.gen_range(-10.0..=10.0);
            let u: f64 = rng.gen_range(-3.0..=3.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            GroupPoint::affine(b, sign * u.exp())
        }
        GroupKind::TfPlane => GroupPoint::tf(rng.gen_range(-10.0..=10.0), rng.gen_range(-10.0..=10.0)),
    }
}

/// Falsifier for `w(xy) <= w(x) w(y)` on the box `b in [-10, 10]`, `u in [-3, 3]`
/// (affine) or `[-10, 10]^2` (plane).
pub fn submultiplicativity_probe(w: &WeightSpec, samples: usize, seed: u64) -> Result<ProbeReport> {
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst = None;
    for _ in 0..samples {
        let x = random_point(w.group(), &mut rng);
        let y = random_point(w.group(), &mut rng);
        let r = w.eval(&x.mul(&y)?)? / (w.eval(&x)? * w.eval(&y)?);
        if r > max_ratio {
            max_ratio = r;
            worst = Some((x, y));
        }
    }
    Ok(ProbeReport { samples, max_ratio, worst_pair: worst, pass: max_ratio <= 1.0 + PROBE_SLACK })
}

/// Falsifier for `m(xy) <= w(x) m(y)` and `m(xy) <= m(x) w(y)`.
pub fn moderateness_probe(m: &WeightSpec, w: &WeightSpec, samples: usize, seed: u64) -> Result<ModerateReport> {
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    if m.group() != w.group() {
        return Err(CoorbitError::GroupMismatch("weights live on different groups".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut left, mut right) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let x = random_point(m.group(), &mut rng);
        let y = random_point(m.group(), &mut rng);
        let mxy = m.eval(&x.mul(&y)?)?;
        left = left.max(mxy / (w.eval(&x)? * m.eval(&y)?));
        right = right.max(mxy / (m.eval(&x)? * w.eval(&y)?));
    }
    Ok(ModerateReport {
        samples,
        max_left: left,
        max_right: right,
        pass: left <= 1.0 + PROBE_SLACK && right <= 1.0 + PROBE_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_core::AffinePoint;
    use proptest::prelude::*;

    #[test]
    fn evaluation_examples() {
        assert_eq!(WeightSpec::power_scale(2.0).eval(&GroupPoint::affine(5.0, 0.5)).unwrap(), 4.0);
        assert_eq!(WeightSpec::symmetric_power(1.0).unwrap().eval(&GroupPoint::affine(0.0, 2.0)).unwrap(), 2.5);
        assert_eq!(WeightSpec::poly_tf(1.0, 2.0).unwrap().eval(&GroupPoint::tf(1.0, 1.0)).unwrap(), 8.0);
        assert!(WeightSpec::power_scale(1.0).eval(&GroupPoint::tf(0.0, 0.0)).is_err());
        assert!(WeightSpec::poly_tf(1.0, 1.0).unwrap().eval(&GroupPoint::affine(0.0, 1.0)).is_err());
        assert!(WeightSpec::symmetric_power(-1.0).is_err());
        assert!(WeightSpec::poly_tf(-1.0, 0.0).is_err());
    }

    #[test]
    fn control_examples() {
        let w = |r| WeightSpec::symmetric_power(r).unwrap();
        let m1 = WeightSpec::power_scale(1.0);
        assert!(is_p_control(&w(2.0), &m1, 2.0).unwrap());
        assert!(!is_p_control(&w(1.2), &m1, 2.0).unwrap());
        let v = |r, s| WeightSpec::poly_tf(r, s).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            assert!(is_p_control(&v(2.0, 2.0), &v(1.0, 1.0), p).unwrap());
        }
        assert!(!is_p_control(&v(0.5, 2.0), &v(1.0, 1.0), 2.0).unwrap());
        // p = 1 and p = inf both need the full extra unit
        assert!(is_p_control(&w(2.0), &m1, 1.0).unwrap());
        assert!(!is_p_control(&w(1.9), &m1, f64::INFINITY).unwrap());
        let c = WeightSpec::custom(GroupKind::Affine, "one", |_| 1.0);
        assert!(matches!(is_p_control(&c, &m1, 2.0), Err(CoorbitError::NoClosedForm(_))));
        assert!(is_p_control(&w(1.0), &m1, 0.5).is_err());
    }

    #[test]
    fn probe_examples() {
        for rho in [0.0, 0.5, 1.0, 2.5] {
            assert!(submultiplicativity_probe(&WeightSpec::symmetric_power(rho).unwrap(), 2000, 7).unwrap().pass);
        }
        assert!(submultiplicativity_probe(&WeightSpec::poly_tf(1.5, 2.0).unwrap(), 2000, 7).unwrap().pass);
        let m1 = submultiplicativity_probe(&WeightSpec::power_scale(1.0), 2000, 7).unwrap();
        assert!(m1.pass && (m1.max_ratio - 1.0).abs() < 1e-12);

        for s in [-1.5, 0.5, 2.0] {
            let r = moderateness_probe(
                &WeightSpec::power_scale(s),
                &WeightSpec::symmetric_power(f64::abs(s)).unwrap(),
                20000,
                3,
            )
            .unwrap();
            assert!(r.pass, "s = {s}: {r:?}");
        }
        let v = WeightSpec::poly_tf(1.0, 3.0).unwrap();
        assert!(moderateness_probe(&v, &v, 5000, 3).unwrap().pass);
        let bad = moderateness_probe(&WeightSpec::power_scale(1.0), &WeightSpec::symmetric_power(0.0).unwrap(), 5000, 3)
            .unwrap();
        assert!(!bad.pass);
        assert!(submultiplicativity_probe(&v, 0, 1).is_err());
    }

    #[test]
    fn json_forms() {
        let w: WeightSpec = serde_json::from_str(r#"{"family":"power_scale","s":1.0}"#).unwrap();
        assert_eq!(w, WeightSpec::power_scale(1.0));
        assert_eq!(
            serde_json::to_string(&WeightSpec::poly_tf(1.0, 2.0).unwrap()).unwrap(),
            r#"{"family":"poly_tf","r":1.0,"s":2.0}"#
        );
        assert!(serde_json::from_str::<WeightSpec>(r#"{"family":"symmetric_power","rho":-1}"#).is_err());
        assert!(serde_json::from_str::<WeightSpec>(r#"{"family":"power_scale","s":1,"x":2}"#).is_err());
        assert!(serde_json::to_string(&WeightSpec::custom(GroupKind::Affine, "c", |_| 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn power_scale_is_multiplicative(b1 in -10.0..10.0f64, u1 in -3.0..3.0f64, b2 in -10.0..10.0f64,
                                          u2 in -3.0..3.0f64, s in -3.0..3.0f64) {
            let m = WeightSpec::power_scale(s);
            let (p, q) = (AffinePoint { b: b1, a: u1.exp() }, AffinePoint { b: b2, a: -u2.exp() });
            let lhs = m.eval(&GroupPoint::Affine(p.mul(q))).unwrap();
            let rhs = m.eval(&GroupPoint::Affine(p)).unwrap() * m.eval(&GroupPoint::Affine(q)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn symmetric_power_is_inversion_invariant(b in -10.0..10.0f64, u in -3.0..3.0f64, rho in 0.0..4.0f64) {
            let w = WeightSpec::symmetric_power(rho).unwrap();
            let p = AffinePoint { b, a: u.exp() };
            let a = w.eval(&GroupPoint::Affine(p)).unwrap();
            let b = w.eval(&GroupPoint::Affine(p.inv())).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn poly_tf_is_even(x in -10.0..10.0f64, om in -10.0..10.0f64, r in 0.0..3.0f64, s in 0.0..3.0f64) {
            let v = WeightSpec::poly_tf(r, s).unwrap();
            prop_assert_eq!(v.eval(&GroupPoint::tf(x, om)).unwrap(), v.eval(&GroupPoint::tf(-x, -om)).unwrap());
        }

        #[test]
        fn control_duality(rho in 0.0..4.0f64, s in -3.0..3.0f64, p in 1.0..20.0f64, inf in any::<bool>()) {
            let p = if inf { f64::INFINITY } else { p };
            let w = WeightSpec::symmetric_power(rho).unwrap();
            let a = is_p_control(&w, &WeightSpec::power_scale(s), p).unwrap();
            let b = is_p_control(&w, &WeightSpec::power_scale(-s), conjugate_exponent(p)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
