//! Uniformly sampled signals and their Fourier transforms.
//!
//! Fourier convention: `f^(w) = int f(t) exp(-2 pi i t w) dt`, approximated by a
//! `dt`-scaled DFT whose frequencies are laid out centered at zero,
//! `w_k = (k - floor(N/2)) / (N dt)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{invalid, CoorbitError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest moment order probed by [`SampledSignal::vanishing_moment_count`].
pub const MOMENT_CAP: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalFile", into = "SignalFile")]
pub struct SampledSignal {
    t0: f64,
    dt: f64,
    values: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalFile {
    t0: f64,
    dt: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<SignalFile> for SampledSignal {
    type Error = CoorbitError;
    fn try_from(f: SignalFile) -> Result<Self> {
        if f.re.len() != f.im.len() {
            return Err(CoorbitError::DimensionMismatch {
                left: f.re.len(),
                right: f.im.len(),
            });
        }
        let values = f.re.iter().zip(&f.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        SampledSignal::new(f.t0, f.dt, values)
    }
}

impl From<SampledSignal> for SignalFile {
    fn from(s: SampledSignal) -> Self {
        SignalFile {
            t0: s.t0,
            dt: s.dt,
            re: s.values.iter().map(|z| z.re).collect(),
            im: s.values.iter().map(|z| z.im).collect(),
        }
    }
}

/// Samples of `f^` on a uniform frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub w0: f64,
    pub dw: f64,
    pub values: Vec<Complex64>,
    /// Origin of the time grid the spectrum was taken from; needed to invert.
    pub t0: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn freq(&self, k: usize) -> f64 {
        self.w0 + k as f64 * self.dw
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dw).sqrt()
    }

    pub fn inverse(&self) -> SampledSignal {
        let n = self.values.len();
        let dt = 1.0 / (n as f64 * self.dw);
        let mut v = dft::grid_sum(&self.values, self.w0, self.dw, self.t0, dt, n, 1.0);
        for z in &mut v {
            *z *= self.dw;
        }
        SampledSignal { t0: self.t0, dt, values: v }
    }
}

/// Raw and absolute moments on the sampling window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Moments {
    /// `int t^k psi(t) dt` for `k = 0..=k_max`.
    pub raw: Vec<Complex64>,
    /// `int |t|^k |psi(t)| dt`.
    pub absolute: Vec<f64>,
    /// First and last sample time; the integrals only see this window.
    pub window: (f64, f64),
}

pub fn inverse_fourier(s: &Spectrum) -> SampledSignal {
    s.inverse()
}

pub fn fourier(f: &SampledSignal) -> Spectrum {
    f.fourier()
}

impl SampledSignal {
    pub fn new(t0: f64, dt: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && t0.is_finite()) {
            return Err(invalid(format!("bad grid t0 = {t0}, dt = {dt}")));
        }
        if values.len() < 2 {
            return Err(invalid("a signal needs at least two samples"));
        }
        Ok(SampledSignal { t0, dt, values })
    }

    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = (0..n).map(|i| f(t0 + i as f64 * dt)).collect();
        Self::new(t0, dt, values)
    }

    pub fn from_real_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(t0, dt, n, |t| Complex64::new(f(t), 0.0))
    }

    /// Signal whose spectrum on the natural frequency grid is `fhat`.
    pub fn from_spectrum_fn(
        t0: f64,
        dt: f64,
        n: usize,
        fhat: impl Fn(f64) -> Complex64,
    ) -> Result<Self> {
        let zeros = Self::new(t0, dt, vec![ZERO; n])?;
        let mut s = zeros.fourier();
        for k in 0..n {
            s.values[k] = fhat(s.freq(k));
        }
        Ok(s.inverse())
    }

    pub fn zeros_like(&self) -> Self {
        SampledSignal { t0: self.t0, dt: self.dt, values: vec![ZERO; self.len()] }
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(CoorbitError::DimensionMismatch { left: self.len(), right: values.len() });
        }
        Ok(SampledSignal { t0: self.t0, dt: self.dt, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn same_grid(&self, other: &SampledSignal) -> bool {
        self.len() == other.len()
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt).sqrt()
    }

    /// `<f, g> = int f conj(g)`, linear in the first slot.
    pub fn inner(&self, other: &SampledSignal) -> Result<Complex64> {
        self.check_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum::<Complex64>()
            * self.dt)
    }

    pub(crate) fn check_grid(&self, other: &SampledSignal) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(CoorbitError::GridMismatch(format!(
                "(t0 {}, dt {}, N {}) vs (t0 {}, dt {}, N {})",
                self.t0,
                self.dt,
                self.len(),
                other.t0,
                other.dt,
                other.len()
            )))
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        SampledSignal { t0: self.t0, dt: self.dt, values: self.values.iter().map(|z| z * c).collect() }
    }

    pub fn add(&self, other: &SampledSignal) -> Result<Self> {
        self.check_grid(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(SampledSignal { t0: self.t0, dt: self.dt, values: v })
    }

    pub fn sub(&self, other: &SampledSignal) -> Result<Self> {
        self.add(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    /// Linear interpolation between samples, zero outside the sampled window.
    pub fn value_at(&self, t: f64) -> Complex64 {
        let p = (t - self.t0) / self.dt;
        let n = self.len();
        let r = p.round();
        if (p - r).abs() < 1e-9 {
            if r < 0.0 || r > (n - 1) as f64 {
                return ZERO;
            }
            return self.values[r as usize];
        }
        if p < 0.0 || p > (n - 1) as f64 {
            return ZERO;
        }
        let i = p.floor() as usize;
        let f = p - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// `T_x f(t) = f(t - x)`.
    pub fn translate(&self, x: f64) -> Self {
        let v = (0..self.len()).map(|i| self.value_at(self.time(i) - x)).collect();
        SampledSignal { t0: self.t0, dt: self.dt, values: v }
    }

    /// `M_w f(t) = exp(2 pi i t w) f(t)`.
    pub fn modulate(&self, w: f64) -> Self {
        let v = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &z)| z * dft::cis_turns(self.time(i) * w))
            .collect();
        SampledSignal { t0: self.t0, dt: self.dt, values: v }
    }

    /// `D_a f(t) = |a|^(-1/2) f(t / a)`.
    pub fn dilate(&self, a: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(invalid("dilation by zero"));
        }
        let c = a.abs().powf(-0.5);
        let v = (0..self.len()).map(|i| self.value_at(self.time(i) / a) * c).collect();
        Ok(SampledSignal { t0: self.t0, dt: self.dt, values: v })
    }

    pub fn fourier(&self) -> Spectrum {
        let n = self.len();
        let dw = 1.0 / (n as f64 * self.dt);
        let w0 = -((n / 2) as f64) * dw;
        let mut v = dft::grid_sum(&self.values, self.t0, self.dt, w0, dw, n, -1.0);
        for z in &mut v {
            *z *= self.dt;
        }
        Spectrum { w0, dw, values: v, t0: self.t0 }
    }

    /// `f^` on the grid `xi0 + k dxi`, `k < m`, via the exact DTFT of the
    /// samples (the trigonometric interpolant of the natural spectrum).
    /// Frequencies outside the principal band `|xi| < 1/(2 dt)` read as zero.
    pub fn spectrum_on_grid(&self, xi0: f64, dxi: f64, m: usize) -> Vec<Complex64> {
        let mut v = dft::grid_sum(&self.values, self.t0, self.dt, xi0, dxi, m, -1.0);
        let nyq = 0.5 / self.dt;
        for (k, z) in v.iter_mut().enumerate() {
            let xi = xi0 + k as f64 * dxi;
            if xi.abs() >= nyq * (1.0 - 1e-12) {
                *z = ZERO;
            } else {
                *z *= self.dt;
            }
        }
        v
    }

    pub fn moments(&self, k_max: usize) -> Moments {
        let n = self.len();
        let mut raw = vec![ZERO; k_max + 1];
        let mut absolute = vec![0.0; k_max + 1];
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 * self.dt } else { self.dt };
            let t = self.time(i);
            let z = self.values[i];
            let za = z.norm();
            let mut tk = 1.0;
            let mut atk = 1.0;
            for k in 0..=k_max {
                raw[k] += z * (tk * w);
                absolute[k] += za * atk * w;
                tk *= t;
                atk *= t.abs();
            }
        }
        Moments { raw, absolute, window: (self.t0, self.time(n - 1)) }
    }

    /// Largest `L <= MOMENT_CAP` with `|m_k| <= tol * int |t|^k |psi|` for every `k < L`.
    pub fn vanishing_moment_count(&self, tol: f64) -> usize {
        let m = self.moments(MOMENT_CAP);
        (0..MOMENT_CAP)
            .find(|&k| m.raw[k].norm() > tol * m.absolute[k])
            .unwrap_or(MOMENT_CAP)
    }

    /// Cumulative trapezoid integral from the left edge of the grid.
    pub fn antiderivative(&self) -> Self {
        let mut acc = ZERO;
        let mut v = Vec::with_capacity(self.len());
        v.push(ZERO);
        for i in 1..self.len() {
            acc += (self.values[i - 1] + self.values[i]) * (0.5 * self.dt);
            v.push(acc);
        }
        SampledSignal { t0: self.t0, dt: self.dt, values: v }
    }

    /// Spectral derivative. The top 10% of frequencies (relative to Nyquist)
    /// are zeroed before multiplying by `(2 pi i w)^order`.
    pub fn derivative(&self, order: u32) -> Result<Self> {
        if order == 0 {
            return Err(invalid("derivative order must be at least 1"));
        }
        let mut s = self.fourier();
        let cut = 0.9 * 0.5 / self.dt;
        for k in 0..s.len() {
            let w = s.freq(k);
            s.values[k] = if w.abs() > cut {
                ZERO
            } else {
                s.values[k] * Complex64::new(0.0, 2.0 * PI * w).powu(order)
            };
        }
        Ok(s.inverse())
    }
}

/// `(1 - t^2) exp(-t^2 / 2)`.
pub fn mexican_hat(t0: f64, dt: f64, n: usize) -> Result<SampledSignal> {
    SampledSignal::from_real_fn(t0, dt, n, |t| (1.0 - t * t) * (-0.5 * t * t).exp())
}

/// Analytic transform of [`mexican_hat`]: `sqrt(2 pi) (2 pi w)^2 exp(-2 pi^2 w^2)`.
pub fn mexican_hat_hat(w: f64) -> f64 {
    let x = 2.0 * PI * w;
    (2.0 * PI).sqrt() * x * x * (-0.5 * x * x).exp()
}

/// `exp(-pi t^2)`, its own Fourier transform.
pub fn gaussian(t0: f64, dt: f64, n: usize) -> Result<SampledSignal> {
    SampledSignal::from_real_fn(t0, dt, n, |t| (-PI * t * t).exp())
}

/// 1 on `[0, 1/2)`, -1 on `[1/2, 1)`.
pub fn haar(t0: f64, dt: f64, n: usize) -> Result<SampledSignal> {
    let eps = 1e-9 * dt;
    SampledSignal::from_real_fn(t0, dt, n, |t| {
        if t >= -eps && t < 0.5 - eps {
            1.0
        } else if t >= 0.5 - eps && t < 1.0 - eps {
            -1.0
        } else {
            0.0
        }
    })
}

/// Indicator of `[-width/2, width/2]`.
pub fn boxcar(t0: f64, dt: f64, n: usize, width: f64) -> Result<SampledSignal> {
    SampledSignal::from_real_fn(t0, dt, n, |t| if t.abs() <= 0.5 * width { 1.0 } else { 0.0 })
}

/// Wavelet with `psi^(w) = exp(-(w^2 + w^-2))`; smooth, all moments vanish.
pub fn smooth_atom(t0: f64, dt: f64, n: usize) -> Result<SampledSignal> {
    SampledSignal::from_spectrum_fn(t0, dt, n, |w| {
        if w == 0.0 {
            ZERO
        } else {
            Complex64::new((-(w * w + 1.0 / (w * w))).exp(), 0.0)
        }
    })
}
