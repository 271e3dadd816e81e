//! Frame certificates, empirical frame bounds, Neumann reconstruction from
//! samples, lattice design, the Gabor frame operator and exponent maps.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::discretization::{
    density_probe, is_u_dense, local_weight_bounds, sample_field, seq_lpm_norm, AffineLattice, Bupu,
    Lattice, LatticePoint, SampledSequence, TfGenerator, TfLattice,
};
use crate::error::{invalid, CoorbitError, Result};
use crate::group_core::{ChartSpec, GroupField, GroupKind, GroupQuadrature};
use crate::group_field::{convolve, lpm_norm, oscillation, NeighborhoodSpec};
use crate::signal::SampledSignal;
use crate::voice::{cwt, normalize_admissible, reproducing_kernel, stft};
use crate::weights::WeightSpec;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative tolerance for counting vanishing moments in atom checks.
pub const MOMENT_TOL: f64 = 1e-6;
const MAX_REDRAWS: usize = 10;
const DIVERGENCE_RUN: usize = 3;

const CAVEAT: &str = "norms are taken on a truncated chart; q < 1 there does not prove the bound on the whole group";

/// `q = |K|_{L1_w} |osc_U K|_{L1_w}` and whether it is below 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameCertificate {
    pub kernel_l1w: f64,
    pub osc_l1w: f64,
    pub q: f64,
    pub neighborhood: NeighborhoodSpec,
    pub weight: WeightSpec,
    pub chart: ChartSpec,
    pub pass: bool,
    pub caveat: String,
}

pub fn certificate_from_kernel(k: &GroupField, w: &WeightSpec, u: &NeighborhoodSpec) -> Result<FrameCertificate> {
    let kernel_l1w = lpm_norm(k, 1.0, w)?;
    let osc_l1w = lpm_norm(&oscillation(k, u)?, 1.0, w)?;
    let q = kernel_l1w * osc_l1w;
    Ok(FrameCertificate {
        kernel_l1w,
        osc_l1w,
        q,
        neighborhood: *u,
        weight: w.clone(),
        chart: k.quad().spec(),
        pass: q < 1.0,
        caveat: CAVEAT.into(),
    })
}

/// Normalizes `psi` (admissibility constant on the affine group, `L2` norm on
/// the plane), builds `K = V_psi psi` on `quad` and certifies it.
pub fn atom_certificate(
    psi: &SampledSignal,
    quad: &Arc<GroupQuadrature>,
    w: &WeightSpec,
    u: &NeighborhoodSpec,
) -> Result<FrameCertificate> {
    let k = normalized_kernel(psi, quad)?;
    certificate_from_kernel(&k, w, u)
}

/// Reproducing kernel of the normalized atom.
pub fn normalized_kernel(psi: &SampledSignal, quad: &Arc<GroupQuadrature>) -> Result<GroupField> {
    let psi = match quad.kind() {
        GroupKind::Affine => normalize_admissible(psi)?,
        GroupKind::TfPlane => {
            let n = psi.l2_norm();
            if n == 0.0 {
                return Err(CoorbitError::Degenerate("zero window".into()));
            }
            psi.scaled(Complex64::new(1.0 / n, 0.0))
        }
    };
    reproducing_kernel(&psi, quad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    pub rho: f64,
    pub vanishing_moments: usize,
    /// `L - 1/2`.
    pub threshold: f64,
    /// `int |t|^(L+1) |psi|` on the sampling window.
    pub next_absolute_moment: f64,
    /// Windowed `L1` norms of `psi', ..., psi^(L)`.
    pub derivative_l1: Vec<f64>,
    pub pass: bool,
}

/// Passes iff `rho < L - 1/2` for the vanishing moment count `L` and all
/// measured moment and derivative norms are finite.
pub fn wavelet_atom_sufficient(psi: &SampledSignal, rho: f64, tol: f64) -> Result<AtomReport> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(invalid(format!("rho must be finite and nonnegative, got {rho}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("moment tolerance must be positive, got {tol}")));
    }
    let l = psi.vanishing_moment_count(tol);
    let next_absolute_moment = psi.moments(l + 1).absolute[l + 1];
    let mut derivative_l1 = Vec::with_capacity(l);
    for order in 1..=l as u32 {
        let d = psi.derivative(order)?;
        derivative_l1.push(d.values().iter().map(|z| z.norm()).sum::<f64>() * d.dt());
    }
    let threshold = l as f64 - 0.5;
    let finite = next_absolute_moment.is_finite() && derivative_l1.iter().all(|v| v.is_finite());
    let nonzero = psi.values().iter().any(|z| *z != ZERO);
    Ok(AtomReport {
        rho,
        vanishing_moments: l,
        threshold,
        next_absolute_moment,
        derivative_l1,
        pass: nonzero && finite && rho < threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub alpha: f64,
    pub beta: f64,
    /// `int |g(t)| (1 + |t|)^alpha dt` on the window.
    pub time_norm: f64,
    /// `int |g^(w)| (1 + |w|)^beta dw` on the natural frequency grid.
    pub freq_norm: f64,
    /// Share of each norm carried by the outer 10% of its grid.
    pub time_tail: f64,
    pub freq_tail: f64,
    pub pass: bool,
}

/// Tail share below which a windowed norm counts as converged.
pub const TAIL_SHARE: f64 = 0.01;

fn weighted_l1_with_tail(xs: impl Iterator<Item = (f64, f64)>, n: usize, step: f64, power: f64) -> (f64, f64) {
    let edge = n / 20;
    let (mut total, mut tail) = (0.0, 0.0);
    for (i, (x, v)) in xs.enumerate() {
        let c = v * (1.0 + x.abs()).powf(power) * step;
        total += c;
        if i < edge || i >= n - edge {
            tail += c;
        }
    }
    (total, if total > 0.0 { tail / total } else { 1.0 })
}

/// `alpha = 2r + 2`, `beta = 2s + 2`; passes iff both windowed norms are
/// finite, nonzero and less than 1% of each sits in the outer tenth of its grid.
pub fn stft_window_sufficient(g: &SampledSignal, r: f64, s: f64) -> Result<WindowReport> {
    if !(r >= 0.0 && s >= 0.0 && r.is_finite() && s.is_finite()) {
        return Err(invalid(format!("need finite r, s >= 0, got ({r}, {s})")));
    }
    let (alpha, beta) = (2.0 * r + 2.0, 2.0 * s + 2.0);
    let n = g.len();
    let (time_norm, time_tail) =
        weighted_l1_with_tail((0..n).map(|i| (g.time(i), g.values()[i].norm())), n, g.dt(), alpha);
    let spec = g.fourier();
    let (freq_norm, freq_tail) =
        weighted_l1_with_tail((0..n).map(|k| (spec.freq(k), spec.values[k].norm())), n, spec.dw, beta);
    let ok = |norm: f64, tail: f64| norm > 0.0 && norm.is_finite() && tail < TAIL_SHARE;
    Ok(WindowReport {
        alpha,
        beta,
        time_norm,
        freq_norm,
        time_tail,
        freq_tail,
        pass: ok(time_norm, time_tail) && ok(freq_norm, freq_tail),
    })
}

/// Analyzing vector of a frame test.
#[derive(Clone, Debug)]
pub enum Analyzer {
    Wavelet(SampledSignal),
    Gabor(SampledSignal),
}

impl Analyzer {
    fn signal(&self) -> &SampledSignal {
        match self {
            Analyzer::Wavelet(s) | Analyzer::Gabor(s) => s,
        }
    }

    fn group(&self) -> GroupKind {
        match self {
            Analyzer::Wavelet(_) => GroupKind::Affine,
            Analyzer::Gabor(_) => GroupKind::TfPlane,
        }
    }

    pub fn transform(&self, f: &SampledSignal, quad: &Arc<GroupQuadrature>) -> Result<GroupField> {
        match self {
            Analyzer::Wavelet(psi) => cwt(f, psi, quad),
            Analyzer::Gabor(g) => stft(f, g, quad),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameBoundsReport {
    pub a_hat: f64,
    pub b_hat: f64,
    /// `|sample(V f)|_{p,m} / |V f|_{p,m}` per draw.
    pub ratios: Vec<f64>,
    pub redraws: usize,
}

/// Sum of one to three Gaussian wave packets, placed where the chart of
/// `quad` resolves them and the grid of `like` holds them.
pub fn random_test_signal(
    like: &SampledSignal,
    analyzer: &Analyzer,
    quad: &GroupQuadrature,
    rng: &mut impl Rng,
) -> Result<SampledSignal> {
    let (t_lo, t_hi) = (like.t0(), like.time(like.len() - 1));
    let nyq = 0.5 / like.dt();
    let mut packets = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let (x_lo, x_hi, omega, sigma) = match (quad, analyzer) {
            (GroupQuadrature::Affine(c), Analyzer::Wavelet(psi)) => {
                let wc = peak_frequency(psi);
                let (mut lo, mut hi) = ((4.0 * c.a_min()).ln(), (c.a_max() / 4.0).ln());
                if lo > hi {
                    let mid = 0.5 * (c.a_min().ln() + c.a_max().ln());
                    lo = mid;
                    hi = mid;
                }
                let a = rng.gen_range(lo..=hi).exp();
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let omega = (sign * wc / a).clamp(-0.4 * nyq, 0.4 * nyq);
                (c.b_lo(), c.b_hi(), omega, a * rng.gen_range(1.0..3.0))
            }
            (GroupQuadrature::TfPlane(c), Analyzer::Gabor(_)) => {
                let w_lo = c.w0().max(-0.4 * nyq);
                let w_hi = c.w(c.nw() - 1).min(0.4 * nyq);
                let (wl, wh) = (0.75 * w_lo + 0.25 * w_hi, 0.25 * w_lo + 0.75 * w_hi);
                (c.x0(), c.x(c.nx() - 1), rng.gen_range(wl..=wh), rng.gen_range(0.5..2.0))
            }
            _ => return Err(CoorbitError::GroupMismatch("analyzer and chart live on different groups".into())),
        };
        let (lo, hi) = (x_lo.max(t_lo), x_hi.min(t_hi));
        let (c_lo, c_hi) = (0.75 * lo + 0.25 * hi, 0.25 * lo + 0.75 * hi);
        let sigma = sigma.min(0.25 * (hi - lo).max(like.dt()));
        let center = if c_lo < c_hi { rng.gen_range(c_lo..c_hi) } else { 0.5 * (lo + hi) };
        let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        packets.push((center, sigma, omega, amp));
    }
    SampledSignal::from_fn(like.t0(), like.dt(), like.len(), |t| {
        packets
            .iter()
            .map(|&(c, s, w, amp)| {
                let z = (t - c) / s;
                amp * (-std::f64::consts::PI * z * z).exp() * dft::cis_turns(w * t)
            })
            .sum()
    })
}

fn peak_frequency(psi: &SampledSignal) -> f64 {
    let s = psi.fourier();
    let k = (0..s.len()).max_by(|&i, &j| s.values[i].norm().total_cmp(&s.values[j].norm())).unwrap_or(0);
    let w = s.freq(k).abs();
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

/// Min and max of the sampled-to-continuous norm ratio over `ensemble` random
/// test signals. The family must be `U`-dense on the chart.
#[allow(clippy::too_many_arguments)]
pub fn frame_bounds_empirical(
    analyzer: &Analyzer,
    lat: &Lattice,
    u: &NeighborhoodSpec,
    quad: &Arc<GroupQuadrature>,
    p: f64,
    m: &WeightSpec,
    ensemble: usize,
    seed: u64,
) -> Result<FrameBoundsReport> {
    if ensemble == 0 {
        return Err(invalid("ensemble must be at least 1"));
    }
    if analyzer.group() != quad.kind() || lat.group() != quad.kind() {
        return Err(CoorbitError::GroupMismatch("analyzer, family and chart must share a group".into()));
    }
    let dense = is_u_dense(lat, u, &density_probe(lat, quad)?)?;
    if let Some(witness) = dense.witness {
        return Err(CoorbitError::NotDense { witness });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(ensemble);
    let mut redraws = 0;
    for _ in 0..ensemble {
        let mut tries = 0;
        loop {
            let f = random_test_signal(analyzer.signal(), analyzer, quad, &mut rng)?;
            let v = analyzer.transform(&f, quad)?;
            let cont = lpm_norm(&v, p, m)?;
            if cont > 0.0 && cont.is_finite() {
                ratios.push(seq_lpm_norm(&sample_field(&v, lat)?, p, m)? / cont);
                break;
            }
            tries += 1;
            redraws += 1;
            if tries > MAX_REDRAWS {
                return Err(CoorbitError::Degenerate("test signals keep producing zero transforms".into()));
            }
        }
    }
    let a_hat = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let b_hat = ratios.iter().copied().fold(0.0, f64::max);
    Ok(FrameBoundsReport { a_hat, b_hat, ratios, redraws })
}

/// `b = C N (|osc_U K|_{L1_w} + |K|_{L1_w})` with `C = 1 / (a_2 mu(U)^(1/p))`
/// and `N` the largest number of tiles `x_i U` meeting at a chart node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub c: f64,
    pub overlap: usize,
    pub b: f64,
}

pub fn analytic_upper_bound(
    cert: &FrameCertificate,
    bupu: &Bupu,
    quad: &GroupQuadrature,
    p: f64,
    m: &WeightSpec,
) -> Result<UpperBound> {
    let u = &cert.neighborhood;
    if bupu.neighborhood() != u {
        return Err(invalid("partition and certificate use different neighbourhoods"));
    }
    let lw = local_weight_bounds(m, u)?;
    let c = if p.is_infinite() { 1.0 / lw.lower } else { 1.0 / (lw.lower * u.haar_mass().powf(1.0 / p)) };
    let overlap = (0..quad.len()).map(|n| bupu.weights_at(&quad.point(n)).len()).max().unwrap_or(0).max(1);
    Ok(UpperBound { c, overlap, b: c * overlap as f64 * (cert.osc_l1w + cert.kernel_l1w) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub iterations: usize,
    /// `|F_(n+1) - F_n|_2 / |Y|_2` per step.
    pub residual_history: Vec<f64>,
    /// `|F - F_true|_2 / |F_true|_2` when a reference field was supplied.
    pub final_relative_error: Option<f64>,
    pub converged: bool,
    /// Geometric mean of the last (up to five) consecutive residual ratios.
    pub contraction: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Run even without a passing certificate.
    pub acknowledge_uncertified: bool,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        NeumannOptions { tol: 1e-3, max_iter: 100, acknowledge_uncertified: false }
    }
}

/// `F -> sum_i F(x_i) phi_i` on the nodes of one chart, precomputed. Only
/// the family members whose tiles meet a node are kept; `entries` index
/// into `used`.
struct SynthesisPlan {
    quad: Arc<GroupQuadrature>,
    used: Vec<LatticePoint>,
    used_index: Vec<usize>,
    start: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl SynthesisPlan {
    fn new(bupu: &Bupu, quad: &Arc<GroupQuadrature>) -> Self {
        let mut start = Vec::with_capacity(quad.len() + 1);
        let mut entries = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut used_index = Vec::new();
        start.push(0);
        for n in 0..quad.len() {
            for (i, w) in bupu.weights_at(&quad.point(n)) {
                let s = *slot.entry(i).or_insert_with(|| {
                    used_index.push(i);
                    used_index.len() - 1
                });
                entries.push((s, w));
            }
            start.push(entries.len());
        }
        let lat = bupu.lattice();
        let used = used_index.iter().map(|&i| lat.point_at(i).expect("index in range")).collect();
        SynthesisPlan { quad: quad.clone(), used, used_index, start, entries }
    }

    fn synthesize(&self, c: &[Complex64]) -> GroupField {
        let values = (0..self.quad.len())
            .map(|n| self.entries[self.start[n]..self.start[n + 1]].iter().map(|&(s, w)| c[s] * w).sum())
            .collect();
        GroupField::new(self.quad.clone(), values).expect("plan matches chart")
    }

    fn gather(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.used_index.iter().map(|&i| values[i]).collect()
    }

    fn sample(&self, f: &GroupField) -> Vec<Complex64> {
        self.used.iter().map(|lp| f.value_at(&lp.point).unwrap_or(ZERO)).collect()
    }
}

fn contraction(h: &[f64]) -> Option<f64> {
    let ratios: Vec<f64> =
        h.windows(2).filter(|w| w[0] > 0.0 && w[1] > 0.0).map(|w| w[1] / w[0]).collect();
    let tail = &ratios[ratios.len().saturating_sub(5)..];
    if tail.is_empty() {
        return None;
    }
    Some((tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp())
}

/// Solves `T F = Y` with `T F = (sum_i F(x_i) phi_i) * K` and
/// `Y = (sum_i c_i phi_i) * K` by `F_(n+1) = Y + F_n - T F_n`, `F_0 = Y`.
/// Without a passing certificate the caller has to set
/// `acknowledge_uncertified`. Three residual increases in a row abort.
pub fn neumann_reconstruct(
    samples: &SampledSequence,
    bupu: &Bupu,
    k: &GroupField,
    cert: Option<&FrameCertificate>,
    opts: &NeumannOptions,
    truth: Option<&GroupField>,
) -> Result<(GroupField, ReconstructionReport)> {
    let certified = match cert {
        Some(c) => {
            if c.neighborhood != *bupu.neighborhood() {
                return Err(invalid("certificate and partition use different neighbourhoods"));
            }
            c.pass
        }
        None => false,
    };
    if !certified && !opts.acknowledge_uncertified {
        return Err(invalid("no passing certificate; set acknowledge_uncertified to run anyway"));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(invalid("need tol > 0 and max_iter >= 1"));
    }
    if samples.len() != bupu.len() {
        return Err(CoorbitError::DimensionMismatch { left: bupu.len(), right: samples.len() });
    }
    if samples.lattice != *bupu.lattice() {
        return Err(invalid("sequence indices do not match the partition"));
    }
    if let Some(t) = truth {
        if !t.same_quadrature(k) {
            return Err(CoorbitError::GridMismatch("reference field lives on another chart".into()));
        }
    }
    let plan = SynthesisPlan::new(bupu, k.quad());
    let y = convolve(&plan.synthesize(&plan.gather(&samples.values)), k)?;
    let ny = y.l2_norm();
    let rel_err = |f: &GroupField| -> Result<Option<f64>> {
        match truth {
            Some(t) => {
                let nt = t.l2_norm();
                let d = f.sub(t)?.l2_norm();
                Ok(Some(if nt > 0.0 { d / nt } else { d }))
            }
            None => Ok(None),
        }
    };
    if ny == 0.0 {
        let report = ReconstructionReport {
            iterations: 1,
            residual_history: vec![0.0],
            final_relative_error: rel_err(&y)?,
            converged: true,
            contraction: None,
        };
        return Ok((y, report));
    }
    let mut f = y.clone();
    let mut history = Vec::new();
    let mut rising = 0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let tf = convolve(&plan.synthesize(&plan.sample(&f)), k)?;
        let next = y.add(&f.sub(&tf)?)?;
        let res = next.sub(&f)?.l2_norm() / ny;
        if history.last().is_some_and(|&last| res > last) {
            rising += 1;
        } else {
            rising = 0;
        }
        history.push(res);
        f = next;
        if !res.is_finite() || rising >= DIVERGENCE_RUN {
            let report = ReconstructionReport {
                iterations: history.len(),
                contraction: contraction(&history),
                residual_history: history,
                final_relative_error: rel_err(&f).ok().flatten(),
                converged: false,
            };
            return Err(CoorbitError::Diverged { report: Box::new(report) });
        }
        if res <= opts.tol {
            converged = true;
            break;
        }
    }
    let report = ReconstructionReport {
        iterations: history.len(),
        contraction: contraction(&history),
        residual_history: history,
        final_relative_error: rel_err(&f)?,
        converged,
    };
    Ok((f, report))
}

/// Geometric shrinkage `(alpha_n, beta_n) = (1 + (alpha0 - 1) gamma^n, beta0 gamma^n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSchedule {
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma: f64,
    /// Number of schedule steps tried, starting at `n = 0`.
    pub cap: usize,
}

impl Default for DesignSchedule {
    fn default() -> Self {
        DesignSchedule { alpha0: 2.0, beta0: 1.0, gamma: 0.7, cap: 20 }
    }
}

impl DesignSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 1.0 && self.beta0 > 0.0 && self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("bad schedule {self:?}")));
        }
        Ok(())
    }

    pub fn step(&self, n: usize) -> (f64, f64) {
        let g = self.gamma.powi(n as i32);
        (1.0 + (self.alpha0 - 1.0) * g, self.beta0 * g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignStep {
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDesign {
    pub lattice: AffineLattice,
    pub certificate: FrameCertificate,
    pub history: Vec<DesignStep>,
}

/// The `rho` a scale weight asks of an atom.
fn implied_rho(w: &WeightSpec) -> Result<f64> {
    match *w {
        WeightSpec::SymmetricPower { rho } => Ok(rho),
        WeightSpec::PowerScale { s } => Ok(s.abs()),
        WeightSpec::PolyTf { .. } => Err(CoorbitError::GroupMismatch("lattice design runs on the affine group".into())),
        WeightSpec::Custom(_) => Ok(0.0),
    }
}

/// `Lambda(beta, alpha)` with a window reaching one lattice cell past the chart.
pub fn covering_lattice(beta: f64, alpha: f64, quad: &GroupQuadrature) -> Result<AffineLattice> {
    let c = quad
        .affine()
        .ok_or_else(|| CoorbitError::GroupMismatch("affine lattices need an affine chart".into()))?;
    let la = alpha.ln();
    let j_lo = (c.a_min().ln() / la).floor() as i64 - 1;
    let j_hi = (c.a_max().ln() / la).ceil() as i64 + 1;
    let reach = c.b_lo().abs().max(c.b_hi().abs());
    let kmax = (reach / (beta * alpha.powi(j_lo as i32))).ceil() as i64 + 1;
    let lat = AffineLattice { alpha, beta, j: [j_lo, j_hi], k: [-kmax, kmax], signs: c.signs().to_vec() };
    lat.validate()?;
    Ok(lat)
}

/// Walks the schedule and returns the first `Lambda(beta_n, alpha_n)` whose
/// certificate for `U = A_(beta_n, alpha_n)` passes.
pub fn design_lattice(
    psi: &SampledSignal,
    quad: &Arc<GroupQuadrature>,
    w: &WeightSpec,
    schedule: &DesignSchedule,
) -> Result<LatticeDesign> {
    schedule.validate()?;
    if quad.kind() != GroupKind::Affine || w.group() != GroupKind::Affine {
        return Err(CoorbitError::GroupMismatch("lattice design runs on the affine group".into()));
    }
    let rho = implied_rho(w)?;
    let atom = wavelet_atom_sufficient(psi, rho, MOMENT_TOL)?;
    if !atom.pass {
        return Err(invalid(format!(
            "atom has {} vanishing moments, not enough for rho = {rho}",
            atom.vanishing_moments
        )));
    }
    let mut history = Vec::new();
    if schedule.cap == 0 {
        return Err(CoorbitError::CapReached { steps: 0, best_q: f64::INFINITY });
    }
    let k = normalized_kernel(psi, quad)?;
    for n in 0..schedule.cap {
        let (alpha, beta) = schedule.step(n);
        let u = NeighborhoodSpec::affine(beta, alpha)?;
        let cert = certificate_from_kernel(&k, w, &u)?;
        history.push(DesignStep { alpha, beta, q: cert.q });
        if cert.pass {
            return Ok(LatticeDesign { lattice: covering_lattice(beta, alpha, quad)?, certificate: cert, history });
        }
    }
    let best_q = history.iter().map(|s| s.q).fold(f64::INFINITY, f64::min);
    Err(CoorbitError::CapReached { steps: schedule.cap, best_q })
}

fn tf_lattice_of(lat: &Lattice) -> Result<&TfLattice> {
    match lat {
        Lattice::Tf(t) => Ok(t),
        _ => Err(CoorbitError::GroupMismatch("Gabor systems need a plane lattice".into())),
    }
}

/// `<f, M_w T_x g>` at every lattice point, in lattice order.
pub fn gabor_coefficients(f: &SampledSignal, g: &SampledSignal, lat: &Lattice) -> Result<SampledSequence> {
    f.check_grid(g)?;
    let t = tf_lattice_of(lat)?;
    let n = f.len();
    let values = match t.generator {
        TfGenerator::Separable { alpha_x, beta_w } => {
            let nl = (t.l[1] - t.l[0] + 1) as usize;
            let mut out = Vec::with_capacity(lat.len());
            for k in t.k[0]..=t.k[1] {
                let x = alpha_x * k as f64;
                let h: Vec<Complex64> = (0..n).map(|i| f.values()[i] * g.value_at(f.time(i) - x).conj()).collect();
                let v = dft::grid_sum(&h, f.t0(), f.dt(), t.l[0] as f64 * beta_w, beta_w, nl, -1.0);
                out.extend(v.into_iter().map(|z| z * f.dt()));
            }
            out
        }
        TfGenerator::Matrix { .. } => {
            let mut shifted: HashMap<u64, Vec<Complex64>> = HashMap::new();
            (0..lat.len())
                .map(|i| {
                    let lp = lat.point_at(i).expect("index in range");
                    let q = lp.point.as_tf().expect("plane point");
                    let h = shifted.entry(q.x.to_bits()).or_insert_with(|| {
                        (0..n).map(|i| f.values()[i] * g.value_at(f.time(i) - q.x).conj()).collect()
                    });
                    (0..n).map(|i| h[i] * dft::cis_turns(-q.omega * f.time(i))).sum::<Complex64>() * f.dt()
                })
                .collect()
        }
    };
    SampledSequence::new(lat, values)
}

/// `sum_i c_i M_(w_i) T_(x_i) g` on the grid of `g`.
pub fn gabor_synthesis(c: &SampledSequence, g: &SampledSignal, lat: &Lattice) -> Result<SampledSignal> {
    let t = tf_lattice_of(lat)?;
    if c.len() != lat.len() {
        return Err(CoorbitError::DimensionMismatch { left: lat.len(), right: c.len() });
    }
    let n = g.len();
    let mut out = vec![ZERO; n];
    match t.generator {
        TfGenerator::Separable { alpha_x, beta_w } => {
            let nl = (t.l[1] - t.l[0] + 1) as usize;
            for (row, k) in (t.k[0]..=t.k[1]).enumerate() {
                let cs = &c.values[row * nl..(row + 1) * nl];
                if cs.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let x = alpha_x * k as f64;
                let s = dft::grid_sum(cs, t.l[0] as f64 * beta_w, beta_w, g.t0(), g.dt(), n, 1.0);
                for i in 0..n {
                    out[i] += s[i] * g.value_at(g.time(i) - x);
                }
            }
        }
        TfGenerator::Matrix { .. } => {
            for (lp, z) in c.points().zip(&c.values) {
                if *z == ZERO {
                    continue;
                }
                let q = lp.point.as_tf().expect("plane point");
                for i in 0..n {
                    let t = g.time(i);
                    out[i] += z * dft::cis_turns(q.omega * t) * g.value_at(t - q.x);
                }
            }
        }
    }
    g.with_values(out)
}

/// `S f = sum_i <f, g_i> g_i` with `g_i = M_(w_i) T_(x_i) g`.
pub fn gabor_frame_operator(f: &SampledSignal, g: &SampledSignal, lat: &Lattice) -> Result<SampledSignal> {
    gabor_synthesis(&gabor_coefficients(f, g, lat)?, g, lat)
}

fn cell_volume(t: &TfLattice) -> f64 {
    match t.generator {
        TfGenerator::Separable { alpha_x, beta_w } => alpha_x * beta_w,
        TfGenerator::Matrix { c, a } => c * c * (a[0][0] * a[1][1] - a[0][1] * a[1][0]).abs(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborInversionReport {
    /// Step size `vol / |g|^2`.
    pub lambda: f64,
    pub iterations: usize,
    /// `|h - S f_n| / |h|` with `h` the synthesized coefficients.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Recovers `f` from its Gabor coefficients by the Richardson iteration
/// `f_(n+1) = f_n + lambda (h - S f_n)`, `h = sum_i c_i g_i`.
pub fn gabor_invert(
    c: &SampledSequence,
    g: &SampledSignal,
    lat: &Lattice,
    tol: f64,
    max_iter: usize,
) -> Result<(SampledSignal, GaborInversionReport)> {
    let t = tf_lattice_of(lat)?;
    let gn = g.l2_norm();
    if gn == 0.0 {
        return Err(CoorbitError::Degenerate("zero window".into()));
    }
    let lambda = cell_volume(t) / (gn * gn);
    let h = gabor_synthesis(c, g, lat)?;
    let nh = h.l2_norm();
    let mut f = h.scaled(Complex64::new(lambda, 0.0));
    let mut history = Vec::new();
    if nh == 0.0 {
        return Ok((f, GaborInversionReport { lambda, iterations: 0, residual_history: history, converged: true }));
    }
    let mut converged = false;
    for _ in 0..max_iter {
        let r = h.sub(&gabor_frame_operator(&f, g, lat)?)?;
        let res = r.l2_norm() / nh;
        history.push(res);
        if res <= tol {
            converged = true;
            break;
        }
        f = f.add(&r.scaled(Complex64::new(lambda, 0.0)))?;
    }
    Ok((f, GaborInversionReport { lambda, iterations: history.len(), residual_history: history, converged }))
}

/// Wavelet coorbit of `L^p_(m_s)` is the homogeneous Besov space with
/// smoothness `sigma = s - 1/2 + 1/p` and `q = p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
}

pub fn besov_exponent(p: f64, s: f64) -> Result<BesovIndex> {
    if !(p >= 1.0) || !s.is_finite() {
        return Err(invalid(format!("need 1 <= p <= inf and finite s, got ({p}, {s})")));
    }
    Ok(BesovIndex { sigma: s - 0.5 + crate::weights::recip(p), p, q: p })
}

/// Same map in exact arithmetic; `p = None` stands for infinity.
pub fn besov_exponent_exact(p: Option<Ratio<i64>>, s: Ratio<i64>) -> Result<Ratio<i64>> {
    let inv = match p {
        None => Ratio::from_integer(0),
        Some(p) if p >= Ratio::from_integer(1) => p.recip(),
        Some(p) => return Err(invalid(format!("need p >= 1, got {p}"))),
    };
    Ok(s - Ratio::new(1, 2) + inv)
}

/// `|<f, rho(x, w, tau) g>|` does not see `tau`; the phase-free coefficient
/// `<f, M_w T_x g>` carries the same modulus.
pub fn heisenberg_modulus_gap(f: &SampledSignal, g: &SampledSignal, x: f64, w: f64) -> Result<f64> {
    use crate::group_core::HeisenbergPoint;
    use crate::voice::schrodinger_coefficient;
    let free = f.inner(&g.translate(x).modulate(w))?.norm();
    let mut gap = 0.0f64;
    for tau in [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, 2.0)] {
        let h = HeisenbergPoint::new(vec![x], vec![w], tau)?;
        gap = gap.max((schrodinger_coefficient(f, g, &h)?.norm() - free).abs());
    }
    Ok(gap)
}
