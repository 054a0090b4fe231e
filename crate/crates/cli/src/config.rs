//! Run configuration: TOML (or a previous run's `summary.json`) plus dotted
//! command-line overrides, resolved into a fully explicit, replayable form.

use std::path::{Path, PathBuf};

use radvi_core::basis::default_cutoff_and_mesh;
use radvi_core::linalg::Mat;
use radvi_core::optimizer::OptimizerConfig;
use radvi_core::rng::{stage_rng, STREAM_TARGET};
use radvi_core::targets::{make_anisotropic, Family, TargetSpec};
use radvi_core::whitening::GviConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub target: TargetSection,
    #[serde(default)]
    pub dict: DictSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub whitening: WhiteningSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub family: String,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Explicit `Σ`, row by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<Vec<f64>>>,
    /// Draw `Σ = A Aᵀ + I` from the run seed (ignored when `shape` is given).
    #[serde(default, skip_serializing_if = "is_false")]
    pub anisotropic: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// A number or the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for AutoOr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Float(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Float(v) => Ok(AutoOr::Value(v)),
            Raw::Int(v) => Ok(AutoOr::Value(v as f64)),
            Raw::Text(t) if t == "auto" => Ok(AutoOr::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got \"{t}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictSection {
    #[serde(rename = "R", default)]
    pub cutoff: AutoOr,
    #[serde(default)]
    pub delta: AutoOr,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
}

fn default_alpha() -> f64 {
    0.01
}

fn default_lambda0() -> f64 {
    1.0
}

impl Default for DictSection {
    fn default() -> Self {
        DictSection {
            cutoff: AutoOr::Auto,
            delta: AutoOr::Auto,
            alpha: default_alpha(),
            lambda0: default_lambda0(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningMethod {
    #[default]
    None,
    La,
    Gvi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhiteningSection {
    #[serde(default)]
    pub method: WhiteningMethod,
    /// Gradient-norm tolerance of the Laplace mode search.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Settings for Gaussian VI, used both for whitening and for the GVI baseline.
    #[serde(default)]
    pub gvi: GviConfig,
}

fn default_tol() -> f64 {
    1e-8
}

impl Default for WhiteningSection {
    fn default() -> Self {
        WhiteningSection {
            method: WhiteningMethod::None,
            tol: default_tol(),
            gvi: GviConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `‖T_λ - T*‖²` against the radial oracle (isotropic targets, no whitening).
    MapError,
    /// Radial quantile profiles of truth, baseline and radVI.
    Profile,
    /// Gaussian VI fitted directly to the target, compared by squared radial W₂.
    GviBaseline,
    /// Learned radial law against the law of `exp(-V̄)` (unwhitened runs).
    Stationarity,
    /// Importance-sampled tail probability `P(|y_c| > threshold)`.
    Snis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_requests")]
    pub requests: Vec<MetricKind>,
    #[serde(default = "default_n")]
    pub n_samples: usize,
    /// Number of equally spaced quantile levels in `profile.csv`.
    #[serde(default = "default_levels")]
    pub profile_levels: usize,
    #[serde(default)]
    pub snis_coordinate: usize,
    #[serde(default = "default_threshold")]
    pub snis_threshold: f64,
    /// Independent SNIS repetitions of `n_samples` draws each; estimates are
    /// averaged over repetitions.
    #[serde(default = "default_trials")]
    pub snis_trials: usize,
    /// Coordinates `c` whose second moments `E[y_c²]` are also estimated.
    #[serde(default)]
    pub moment_coordinates: Vec<usize>,
    /// Directions used for spherical averages of anisotropic potentials.
    #[serde(default = "default_sphere")]
    pub sphere_points: usize,
    #[serde(default)]
    pub write_samples: bool,
}

fn default_requests() -> Vec<MetricKind> {
    vec![MetricKind::MapError, MetricKind::Profile]
}

fn default_n() -> usize {
    10_000
}

fn default_levels() -> usize {
    99
}

fn default_threshold() -> f64 {
    2.0
}

fn default_trials() -> usize {
    1
}

fn default_sphere() -> usize {
    1_000
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            requests: default_requests(),
            n_samples: default_n(),
            profile_levels: default_levels(),
            snis_coordinate: 0,
            snis_threshold: default_threshold(),
            snis_trials: default_trials(),
            moment_coordinates: Vec::new(),
            sphere_points: default_sphere(),
            write_samples: false,
        }
    }
}

impl MetricsSection {
    pub fn wants(&self, kind: MetricKind) -> bool {
        self.requests.contains(&kind)
    }
}

/// Default sweep carried by a config file; the command line takes precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: String,
    pub values: Vec<toml::Value>,
}

/// Loads a TOML config, or the `config` object of a `summary.json`.
pub fn load_value(path: &Path) -> CliResult<toml::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(cfg) = json.get_mut("config") {
            json = cfg.take();
        }
        return toml::Value::try_from(json).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    parse_value(&text)
}

pub fn parse_value(text: &str) -> CliResult<toml::Value> {
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Parses the right-hand side of an override; bare words become strings.
pub fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `a.b.c = value`, creating intermediate tables.
pub fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key '{key}'")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{key}' does not address a table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("'{key}' does not address a table")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Applies `key=value` overrides.
pub fn apply_overrides(root: &mut toml::Value, overrides: &[String]) -> CliResult<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{o}' is not key=value")))?;
        set_dotted(root, k.trim(), parse_scalar(v.trim()))?;
    }
    Ok(())
}

pub fn from_value(value: toml::Value) -> CliResult<RunConfig> {
    value.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
}

impl RunConfig {
    pub fn family(&self) -> CliResult<Family> {
        self.target
            .family
            .parse()
            .map_err(|e: radvi_core::Error| CliError::Config(e.to_string()))
    }

    /// Expands every implicit choice: auto dictionary parameters, the logistic
    /// scale, a sampled anisotropic shape and the stage seeds.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let family = self.family()?;
        let mut out = self.clone();
        out.target.family = family.as_str().to_string();
        if family == Family::Logistic && out.target.scale.is_none() {
            out.target.scale = Some(1.0);
        }
        if out.target.anisotropic {
            if out.target.shape.is_none() {
                let base = TargetSpec::<f64>::isotropic(family, out.target.dimension);
                let mut rng = stage_rng(self.seed, STREAM_TARGET);
                let shaped = make_anisotropic(&base, &mut rng)?;
                out.target.shape = shaped.shape.map(|s| s.to_rows());
            }
            out.target.anisotropic = false;
        }
        let spec = out.target_spec()?;
        spec.validate()?;
        let d = spec.ambient_dim();
        let (r, delta) = default_cutoff_and_mesh::<f64>(d);
        if out.dict.cutoff == AutoOr::Auto {
            out.dict.cutoff = AutoOr::Value(r);
        }
        if out.dict.delta == AutoOr::Auto {
            out.dict.delta = AutoOr::Value(delta);
        }
        if !(out.dict.lambda0 >= 0.0) {
            return Err(CliError::Config(format!("lambda0 = {} must be nonnegative", out.dict.lambda0)));
        }
        out.optimizer.seed = self.seed;
        out.optimizer.validate()?;
        out.whitening.gvi.seed = self.seed;
        if !(out.whitening.tol > 0.0) {
            return Err(CliError::Config("whitening.tol must be positive".into()));
        }
        if out.metrics.n_samples == 0 {
            return Err(CliError::Config("metrics.n_samples must be positive".into()));
        }
        if out.metrics.snis_trials == 0 {
            return Err(CliError::Config("metrics.snis_trials must be positive".into()));
        }
        if let Some(&c) = out.metrics.moment_coordinates.iter().find(|&&c| c >= d) {
            return Err(CliError::Config(format!(
                "metrics.moment_coordinates entry {c} is out of range for dimension {d}"
            )));
        }
        if out.metrics.snis_coordinate >= d {
            return Err(CliError::Config(format!(
                "metrics.snis_coordinate = {} is out of range for dimension {d}",
                out.metrics.snis_coordinate
            )));
        }
        Ok(out)
    }

    pub fn target_spec(&self) -> CliResult<TargetSpec<f64>> {
        let family = self.family()?;
        let mut spec = TargetSpec::isotropic(family, self.target.dimension);
        spec.dof = self.target.dof;
        spec.scale = self.target.scale;
        spec.mean = self.target.mean.clone();
        if let Some(rows) = &self.target.shape {
            spec.shape = Some(Mat::from_rows(rows)?);
        }
        Ok(spec)
    }

    /// `(R, δ)` after resolution.
    pub fn cutoff_and_mesh(&self) -> CliResult<(f64, f64)> {
        match (self.dict.cutoff, self.dict.delta) {
            (AutoOr::Value(r), AutoOr::Value(d)) => Ok((r, d)),
            _ => Err(CliError::Config("dictionary parameters are unresolved".into())),
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!("{}-d{}", self.target.family.replace('_', "-"), self.target.dimension)
        })
    }
}
