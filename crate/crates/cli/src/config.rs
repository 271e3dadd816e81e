//! Run configuration: a JSON object, optionally read from `--config`, patched
//! by `--key value` pairs from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use coorbit::group_core::{build_tf_quadrature, GroupKind};
use coorbit::signal::{self, SampledSignal};
use coorbit::{GroupQuadrature, WeightSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const VERSION: &str = "coorbit/1";

/// Keys every command understands; everything else goes to the command.
#[derive(Debug)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub params: Map<String, Value>,
}

impl RunConfig {
    pub fn load(
        command: &str,
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
    ) -> Result<RunConfig, CliError> {
        let mut map = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::io(format!("{}: config must be a JSON object", p.display()))),
                    Err(e) => return Err(CliError::io(format!("{}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        let file_has_version = map.contains_key("version");
        apply_overrides(&mut map, overrides)?;
        if path.is_some() && !file_has_version && !map.contains_key("version") {
            return Err(CliError::config(format!("config file lacks \"version\": \"{VERSION}\"")));
        }
        let version = match map.remove("version") {
            None => VERSION.to_string(),
            Some(Value::String(v)) => v,
            Some(v) => return Err(CliError::config(format!("version must be a string, got {v}"))),
        };
        if version != VERSION {
            return Err(CliError::config(format!("unsupported version tag {version:?}, expected {VERSION:?}")));
        }
        match map.remove("command") {
            None => {}
            Some(Value::String(c)) if c == command => {}
            Some(c) => return Err(CliError::config(format!("config is for command {c}, not {command}"))),
        }
        let file_seed = match map.remove("seed") {
            None => 0,
            Some(v) => v.as_u64().ok_or_else(|| CliError::config(format!("seed must be a nonnegative integer, got {v}")))?,
        };
        Ok(RunConfig { command: command.into(), seed: seed.unwrap_or(file_seed), params: map })
    }

    pub fn params<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(Value::Object(self.params.clone()))
            .map_err(|e| CliError::config(format!("{} parameters: {e}", self.command)))
    }
}

/// `--a.b value` sets `{"a": {"b": value}}`. Values that parse as JSON are
/// taken as JSON, anything else as a string.
fn apply_overrides(map: &mut Map<String, Value>, args: &[String]) -> Result<(), CliError> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            return Err(CliError::config(format!("expected --key, got {arg:?}")));
        };
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let parts: Vec<String> = key.split('.').map(|p| p.replace('-', "_")).collect();
        set_path(map, &parts, value)?;
    }
    Ok(())
}

fn set_path(map: &mut Map<String, Value>, parts: &[String], value: Value) -> Result<(), CliError> {
    let (head, rest) = parts.split_first().expect("nonempty key");
    if rest.is_empty() {
        map.insert(head.clone(), value);
        return Ok(());
    }
    let slot = map.entry(head.clone()).or_insert_with(|| Value::Object(Map::new()));
    match slot {
        Value::Object(inner) => set_path(inner, rest, value),
        _ => Err(CliError::config(format!("{head} is not an object"))),
    }
}

/// Sampling grid for builtin signals.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { t0: -32.0, dt: 1.0 / 64.0, n: 4096 }
    }
}

/// `builtin:<name>` or a path to a signal file.
pub fn load_signal(spec: &str, grid: Grid) -> Result<SampledSignal, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let Grid { t0, dt, n } = grid;
        let s = match name {
            "mexican_hat" => signal::mexican_hat(t0, dt, n),
            "gaussian" => signal::gaussian(t0, dt, n),
            "haar" => signal::haar(t0, dt, n),
            "boxcar" => signal::boxcar(t0, dt, n, 1.0),
            "smooth_atom" => signal::smooth_atom(t0, dt, n),
            _ => return Err(CliError::config(format!("unknown builtin signal {name:?}"))),
        };
        return Ok(s?);
    }
    read_json(Path::new(spec))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Inline JSON or a path to a JSON file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn get(&self) -> Result<T, CliError> {
        match self {
            Source::Path(p) => read_json(p),
            Source::Inline(v) => Ok(v.clone()),
        }
    }
}

/// A number or the string `"inf"`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Num(f64),
    Word(InfWord),
}

#[derive(Clone, Copy, Debug, Deserialize)]
pub enum InfWord {
    #[serde(rename = "inf")]
    Inf,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Num(p) => p,
            Exponent::Word(InfWord::Inf) => f64::INFINITY,
        }
    }
}

impl Default for Exponent {
    fn default() -> Self {
        Exponent::Num(2.0)
    }
}

pub fn chart_or_default(chart: Option<GroupQuadrature>, kind: GroupKind) -> Result<GroupQuadrature, CliError> {
    let q = match chart {
        Some(q) => q,
        None => match kind {
            GroupKind::Affine => GroupQuadrature::desk_default(),
            GroupKind::TfPlane => build_tf_quadrature(-16.0, 0.25, 129, -8.0, 0.125, 129)?,
        },
    };
    if q.kind() != kind {
        return Err(CliError::config(format!("command needs a {kind:?} chart")));
    }
    Ok(q)
}

pub fn weight_or_unit(w: Option<WeightSpec>, kind: GroupKind) -> Result<WeightSpec, CliError> {
    let w = w.unwrap_or_else(|| WeightSpec::unit(kind));
    w.validate()?;
    if w.group() != kind {
        return Err(CliError::config(format!("weight must live on {kind:?}")));
    }
    Ok(w)
}
