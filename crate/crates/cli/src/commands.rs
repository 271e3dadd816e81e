use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use coorbit::discretization::{build_bupu, density_probe, sample_field, Lattice, SampledSequence, TfGenerator};
use coorbit::frames::{
    atom_certificate, certificate_from_kernel, design_lattice, frame_bounds_empirical, neumann_reconstruct,
    normalized_kernel, stft_window_sufficient, wavelet_atom_sufficient, Analyzer, DesignSchedule, FrameCertificate,
    NeumannOptions, ReconstructionReport, MOMENT_TOL,
};
use coorbit::group_core::GroupKind;
use coorbit::group_field::{lpm_norm, NeighborhoodSpec};
use coorbit::signal::Moments;
use coorbit::voice::{admissibility_constant, cwt, normalize_admissible, stft, Admissibility};
use coorbit::{CoorbitError, GroupField, GroupQuadrature, SampledSignal, WeightSpec};
use serde::{Deserialize, Serialize};

use crate::config::{chart_or_default, load_signal, read_json, weight_or_unit, Exponent, Grid, RunConfig, Source};
use crate::error::{CliError, EXIT_DIVERGED};

pub struct Context {
    pub out_dir: PathBuf,
}

impl Context {
    fn write<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Normalize {
    #[default]
    None,
    Admissible,
    L2,
}

fn normalized(s: SampledSignal, how: Normalize) -> Result<SampledSignal, CliError> {
    Ok(match how {
        Normalize::None => s,
        Normalize::Admissible => normalize_admissible(&s)?,
        Normalize::L2 => {
            let n = s.l2_norm();
            if n == 0.0 {
                return Err(CoorbitError::Degenerate("zero signal cannot be normalized".into()).into());
            }
            s.scaled(coorbit::Complex64::new(1.0 / n, 0.0))
        }
    })
}

#[derive(Serialize)]
struct FieldStats {
    l1: f64,
    l2: f64,
    linf: f64,
    weight: WeightSpec,
    coverage: f64,
    nodes: usize,
}

fn write_field(ctx: &Context, field: &GroupField, m: &WeightSpec) -> Result<(), CliError> {
    let stats = FieldStats {
        l1: lpm_norm(field, 1.0, m)?,
        l2: lpm_norm(field, 2.0, m)?,
        linf: lpm_norm(field, f64::INFINITY, m)?,
        weight: m.clone(),
        coverage: field.coverage,
        nodes: field.len(),
    };
    ctx.write("field.json", field)?;
    ctx.write("field.stats.json", &stats)?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CwtParams {
    signal: String,
    wavelet: String,
    #[serde(default)]
    normalize: Normalize,
    #[serde(default)]
    grid: Grid,
    chart: Option<GroupQuadrature>,
    weight: Option<WeightSpec>,
}

pub fn cmd_cwt(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: CwtParams = cfg.params()?;
    let f = load_signal(&p.signal, p.grid)?;
    let psi = normalized(load_signal(&p.wavelet, p.grid)?, p.normalize)?;
    let quad = Arc::new(chart_or_default(p.chart, GroupKind::Affine)?);
    let m = weight_or_unit(p.weight, GroupKind::Affine)?;
    write_field(ctx, &cwt(&f, &psi, &quad)?, &m)?;
    Ok(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StftParams {
    signal: String,
    window: String,
    #[serde(default)]
    normalize: Normalize,
    #[serde(default)]
    grid: Grid,
    chart: Option<GroupQuadrature>,
    weight: Option<WeightSpec>,
}

pub fn cmd_stft(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: StftParams = cfg.params()?;
    let f = load_signal(&p.signal, p.grid)?;
    let g = normalized(load_signal(&p.window, p.grid)?, p.normalize)?;
    let quad = Arc::new(chart_or_default(p.chart, GroupKind::TfPlane)?);
    let m = weight_or_unit(p.weight, GroupKind::TfPlane)?;
    write_field(ctx, &stft(&f, &g, &quad)?, &m)?;
    Ok(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdmissibilityParams {
    wavelet: String,
    #[serde(default)]
    grid: Grid,
}

pub fn cmd_admissibility(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: AdmissibilityParams = cfg.params()?;
    let a = admissibility_constant(&load_signal(&p.wavelet, p.grid)?);
    ctx.write("admissibility.json", &a)?;
    match a {
        Admissibility::Admissible { .. } => Ok(0),
        Admissibility::NotAdmissible { dc_ratio } => {
            Err(CliError::certification(format!("not admissible: |psi^(0)| / max |psi^| = {dc_ratio:e}")))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentParams {
    signal: String,
    #[serde(default)]
    grid: Grid,
    #[serde(default = "default_k_max")]
    k_max: usize,
    #[serde(default = "default_moment_tol")]
    tol: f64,
}

fn default_k_max() -> usize {
    4
}

fn default_moment_tol() -> f64 {
    MOMENT_TOL
}

#[derive(Serialize)]
struct MomentReport {
    moments: Moments,
    vanishing_moments: usize,
    tol: f64,
}

pub fn cmd_moments(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: MomentParams = cfg.params()?;
    let s = load_signal(&p.signal, p.grid)?;
    let report = MomentReport { moments: s.moments(p.k_max), vanishing_moments: s.vanishing_moment_count(p.tol), tol: p.tol };
    ctx.write("moments.json", &report)?;
    Ok(0)
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum AtomTest {
    Kernel,
    Wavelet,
    Window,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CertifyParams {
    atom: String,
    test: AtomTest,
    #[serde(default)]
    grid: Grid,
    chart: Option<GroupQuadrature>,
    weight: Option<WeightSpec>,
    neighborhood: Option<NeighborhoodSpec>,
    rho: Option<f64>,
    #[serde(default = "default_moment_tol")]
    tol: f64,
    r: Option<f64>,
    s: Option<f64>,
}

fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config(format!("missing parameter {name}")))
}

fn verdict(pass: bool, what: &str) -> Result<i32, CliError> {
    if pass {
        Ok(0)
    } else {
        Err(CliError::certification(format!("{what} did not pass")))
    }
}

pub fn cmd_certify(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: CertifyParams = cfg.params()?;
    let atom = load_signal(&p.atom, p.grid)?;
    match p.test {
        AtomTest::Kernel => {
            let u = required(p.neighborhood, "neighborhood")?;
            u.validate()?;
            let quad = Arc::new(chart_or_default(p.chart, u.group())?);
            let w = weight_or_unit(p.weight, u.group())?;
            let cert = atom_certificate(&atom, &quad, &w, &u)?;
            ctx.write("certificate.json", &cert)?;
            verdict(cert.pass, "oscillation certificate")
        }
        AtomTest::Wavelet => {
            let r = wavelet_atom_sufficient(&atom, required(p.rho, "rho")?, p.tol)?;
            ctx.write("certificate.json", &r)?;
            verdict(r.pass, "vanishing-moment test")
        }
        AtomTest::Window => {
            let r = stft_window_sufficient(&atom, required(p.r, "r")?, required(p.s, "s")?)?;
            ctx.write("certificate.json", &r)?;
            verdict(r.pass, "window decay test")
        }
    }
}

fn default_affine_weight() -> WeightSpec {
    WeightSpec::symmetric_power(0.5).expect("valid weight")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignParams {
    wavelet: String,
    #[serde(default)]
    grid: Grid,
    chart: Option<GroupQuadrature>,
    #[serde(default = "default_affine_weight")]
    weight: WeightSpec,
    #[serde(default)]
    schedule: DesignSchedule,
}

pub fn cmd_design(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: DesignParams = cfg.params()?;
    let psi = load_signal(&p.wavelet, p.grid)?;
    let quad = Arc::new(chart_or_default(p.chart, GroupKind::Affine)?);
    let design = design_lattice(&psi, &quad, &p.weight, &p.schedule)?;
    ctx.write("design.json", &design)?;
    ctx.write("lattice.json", &Lattice::Affine(design.lattice.clone()))?;
    Ok(0)
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum AnalyzerKind {
    Wavelet,
    Gabor,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsParams {
    analyzer: AnalyzerKind,
    atom: String,
    lattice: Source<Lattice>,
    neighborhood: Option<NeighborhoodSpec>,
    #[serde(default)]
    grid: Grid,
    chart: Option<GroupQuadrature>,
    #[serde(default)]
    p: Exponent,
    weight: Option<WeightSpec>,
    #[serde(default = "default_ensemble")]
    ensemble: usize,
}

fn default_ensemble() -> usize {
    20
}

/// `A_(beta, alpha)` for `Lambda(beta, alpha)`, the `alpha_x x beta_w` box for separable plane lattices.
fn natural_neighborhood(lat: &Lattice) -> Option<NeighborhoodSpec> {
    match lat {
        Lattice::Affine(l) => NeighborhoodSpec::affine(l.beta, l.alpha).ok(),
        Lattice::Tf(t) => match t.generator {
            TfGenerator::Separable { alpha_x, beta_w } => NeighborhoodSpec::tf(alpha_x, beta_w).ok(),
            TfGenerator::Matrix { .. } => None,
        },
        Lattice::Explicit { .. } => None,
    }
}

fn neighborhood_for(u: Option<NeighborhoodSpec>, lat: &Lattice) -> Result<NeighborhoodSpec, CliError> {
    let u = match u {
        Some(u) => u,
        None => natural_neighborhood(lat)
            .ok_or_else(|| CliError::config("this family needs an explicit neighborhood"))?,
    };
    u.validate()?;
    Ok(u)
}

pub fn cmd_bounds(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: BoundsParams = cfg.params()?;
    let atom = load_signal(&p.atom, p.grid)?;
    let (analyzer, kind) = match p.analyzer {
        AnalyzerKind::Wavelet => (Analyzer::Wavelet(atom), GroupKind::Affine),
        AnalyzerKind::Gabor => (Analyzer::Gabor(atom), GroupKind::TfPlane),
    };
    let lat = p.lattice.get()?;
    let u = neighborhood_for(p.neighborhood, &lat)?;
    let quad = Arc::new(chart_or_default(p.chart, kind)?);
    let m = weight_or_unit(p.weight, kind)?;
    let r = frame_bounds_empirical(&analyzer, &lat, &u, &quad, p.p.value(), &m, p.ensemble, cfg.seed)?;
    ctx.write("bounds.json", &r)?;
    Ok(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructParams {
    atom: String,
    lattice: Source<Lattice>,
    neighborhood: Option<NeighborhoodSpec>,
    #[serde(default)]
    grid: Grid,
    chart: Option<GroupQuadrature>,
    weight: Option<WeightSpec>,
    /// A sequence file; otherwise `field` is sampled on the lattice.
    samples: Option<PathBuf>,
    field: Option<PathBuf>,
    /// Reference for the error; defaults to `field`.
    truth: Option<PathBuf>,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default)]
    acknowledge_uncertified: bool,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    100
}

#[derive(Serialize)]
struct ReconstructionOutput<'a> {
    certificate: &'a FrameCertificate,
    report: &'a ReconstructionReport,
}

fn load_field(path: &Path, quad: &Arc<GroupQuadrature>) -> Result<GroupField, CliError> {
    let f: GroupField = read_json(path)?;
    if **f.quad() != **quad {
        return Err(CliError::config(format!("{} lives on another chart", path.display())));
    }
    Ok(GroupField::new(quad.clone(), f.values().to_vec())?)
}

pub fn cmd_reconstruct(cfg: &RunConfig, ctx: &Context) -> Result<i32, CliError> {
    let p: ReconstructParams = cfg.params()?;
    let atom = load_signal(&p.atom, p.grid)?;
    let lat = p.lattice.get()?;
    let u = neighborhood_for(p.neighborhood, &lat)?;
    let kind = u.group();
    let quad = Arc::new(chart_or_default(p.chart, kind)?);
    let w = match p.weight {
        Some(w) => weight_or_unit(Some(w), kind)?,
        None if kind == GroupKind::Affine => default_affine_weight(),
        None => WeightSpec::unit(kind),
    };
    let k = normalized_kernel(&atom, &quad)?;
    let cert = certificate_from_kernel(&k, &w, &u)?;
    ctx.write("certificate.json", &cert)?;
    if !cert.pass && !p.acknowledge_uncertified {
        return Err(CliError::certification(format!(
            "certificate fails (q = {}); set acknowledge_uncertified to run anyway",
            cert.q
        )));
    }
    let field = p.field.as_deref().map(|f| load_field(f, &quad)).transpose()?;
    let truth = match &p.truth {
        Some(t) => Some(load_field(t, &quad)?),
        None => field.clone(),
    };
    let samples: SampledSequence = match (&p.samples, &field) {
        (Some(s), _) => read_json(s)?,
        (None, Some(f)) => sample_field(f, &lat)?,
        (None, None) => return Err(CliError::config("need samples or field")),
    };
    let bupu = build_bupu(&lat, &u, &density_probe(&lat, &quad)?)?;
    let opts = NeumannOptions { tol: p.tol, max_iter: p.max_iter, acknowledge_uncertified: p.acknowledge_uncertified };
    match neumann_reconstruct(&samples, &bupu, &k, Some(&cert), &opts, truth.as_ref()) {
        Ok((f, report)) => {
            ctx.write("reconstruction.json", &ReconstructionOutput { certificate: &cert, report: &report })?;
            ctx.write("reconstructed_field.json", &f)?;
            Ok(0)
        }
        Err(CoorbitError::Diverged { report }) => {
            ctx.write("reconstruction.json", &ReconstructionOutput { certificate: &cert, report: &report })?;
            Err(CliError {
                code: EXIT_DIVERGED,
                message: format!("Neumann iteration diverged; residuals {:?}", report.residual_history),
            })
        }
        Err(e) => Err(e.into()),
    }
}
