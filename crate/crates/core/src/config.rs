//! TOML run configuration with `section.key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agc_model::AreaParams;
use crate::error::{Error, Result};

/// The shipped three-area configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/agc_default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub areas: Vec<AreaParams>,
    #[serde(default)]
    pub attacked: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKindConfig {
    Robust,
    SteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "default_kind")]
    pub kind: DesignKindConfig,
    #[serde(default = "default_d_n")]
    pub d_n: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_pole")]
    pub pole: f64,
    pub polytope_a: Vec<Vec<f64>>,
    pub polytope_b: Vec<f64>,
}

fn default_kind() -> DesignKindConfig {
    DesignKindConfig::Robust
}
fn default_d_n() -> usize {
    3
}
fn default_eta() -> f64 {
    10.0
}
fn default_pole() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Explicit basis rows; `None` derives one from the measurement model.
    pub basis: Option<Vec<Vec<f64>>>,
    pub basic_f: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackChoice {
    None,
    WorstCase,
    Alpha,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default = "default_onset")]
    pub onset: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_attack")]
    pub attack: AttackChoice,
    pub alpha: Option<Vec<f64>>,
    pub f: Option<Vec<f64>>,
    #[serde(default)]
    pub noise: bool,
    /// Per-step load samples replacing the Gaussian model.
    pub load_series: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub load_std: BTreeMap<String, f64>,
    #[serde(default)]
    pub process_noise: BTreeMap<String, f64>,
    #[serde(default)]
    pub measurement_noise: BTreeMap<String, f64>,
}

fn default_horizon() -> f64 {
    60.0
}
fn default_ts() -> f64 {
    0.5
}
fn default_onset() -> f64 {
    30.0
}
fn default_seed() -> u64 {
    1
}
fn default_attack() -> AttackChoice {
    AttackChoice::WorstCase
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub states: bool,
    #[serde(default)]
    pub measurements: bool,
    #[serde(default = "default_poles")]
    pub poles: Vec<f64>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_poles() -> Vec<f64> {
    vec![0.1, 0.2, 0.4, 0.6, 0.98]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), states: false, measurements: false, poles: default_poles() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Overrides applied on top of the file, in order.
    #[serde(skip)]
    pub overrides: Vec<String>,
}

/// Splits `a.b."c.d"` into `["a", "b", "c.d"]`.
fn split_path(path: &str) -> Result<Vec<String>> {
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in path.chars() {
        match ch {
            '"' => quoted = !quoted,
            '.' if !quoted => parts.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    parts.push(cur);
    if quoted || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(path, "malformed override key"));
    }
    Ok(parts)
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("probe key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) =
        spec.split_once('=').ok_or_else(|| Error::invalid(spec, "override must look like section.key=value"))?;
    let path = split_path(key.trim())?;
    let (last, parents) = path.split_last().expect("split_path returns at least one part");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::invalid(key.trim(), format!("`{p}` is not a table")))?;
    }
    table.insert(last.clone(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::invalid("config", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::invalid(if path == "." { "config".to_string() } else { path }, e.into_inner().message().to_string())
        })?;
        cfg.overrides = overrides.to_vec();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn default_agc() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG, &[]).expect("shipped config is valid")
    }

    /// Field checks that do not need the assembled model.
    pub fn validate(&self) -> Result<()> {
        let d = &self.design;
        if !(d.eta.is_finite() && d.eta > 0.0) {
            return Err(Error::invalid("design.eta", format!("must be > 0, got {}", d.eta)));
        }
        if !(d.pole > 0.0 && d.pole < 1.0) {
            return Err(Error::invalid("design.pole", format!("must lie in (0, 1), got {}", d.pole)));
        }
        if d.polytope_a.len() != d.polytope_b.len() {
            return Err(Error::invalid(
                "design.polytope_b",
                format!("{} rows in polytope_a but {} entries in polytope_b", d.polytope_a.len(), d.polytope_b.len()),
            ));
        }
        let s = &self.scenario;
        if !(s.ts.is_finite() && s.ts > 0.0) {
            return Err(Error::invalid("scenario.ts", format!("must be > 0, got {}", s.ts)));
        }
        if !(s.horizon.is_finite() && s.horizon > 0.0) {
            return Err(Error::invalid("scenario.horizon", format!("must be > 0, got {}", s.horizon)));
        }
        if !(s.onset >= 0.0 && s.onset <= s.horizon) {
            return Err(Error::invalid("scenario.onset", format!("must lie in [0, horizon], got {}", s.onset)));
        }
        if s.attack == AttackChoice::Alpha && s.alpha.is_none() {
            return Err(Error::invalid("scenario.alpha", "required when scenario.attack = \"alpha\""));
        }
        if s.attack == AttackChoice::Raw && s.f.is_none() {
            return Err(Error::invalid("scenario.f", "required when scenario.attack = \"raw\""));
        }
        for (section, map) in [
            ("scenario.load_std", &s.load_std),
            ("scenario.process_noise", &s.process_noise),
            ("scenario.measurement_noise", &s.measurement_noise),
        ] {
            if let Some((k, v)) = map.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(format!("{section}.\"{k}\""), format!("must be finite and >= 0, got {v}")));
            }
        }
        for (i, p) in self.output.poles.iter().enumerate() {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::invalid(format!("output.poles[{i}]"), format!("must lie in (0, 1), got {p}")));
            }
        }
        Ok(())
    }
}
