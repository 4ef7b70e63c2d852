//! JSON experiment configuration. Unknown fields are rejected and every error
//! carries the path of the offending field.

use std::path::PathBuf;

use ldrec_core::noise::FiniteSupport;
use ldrec_core::{NoiseModel, RecursionModel, TransitionMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted field path, `.` for the document root.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    LegendreTable,
    ConditionsCheck,
    ExitAction,
    McExceedance,
    ExitTime,
    SurvivalCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian,
    Skellam,
    /// Centered atoms `[value, probability]`.
    FiniteSupport { atoms: Vec<(f64, f64)> },
    Sum { left: Box<NoiseSpec>, right: Box<NoiseSpec> },
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoiseModel, String> {
        Ok(match self {
            NoiseSpec::Gaussian => NoiseModel::Gaussian01,
            NoiseSpec::Skellam => NoiseModel::SkellamUnit,
            NoiseSpec::FiniteSupport { atoms } => NoiseModel::FiniteSupport(FiniteSupport::new(atoms).map_err(|e| e.to_string())?),
            NoiseSpec::Sum { left, right } => NoiseModel::sum(left.build()?, right.build()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    /// `a x + y`
    Ar1 { a: f64 },
    /// `Σ a_i x_{k-i} + y`
    LinearAr { coeffs: Vec<f64> },
}

impl MapSpec {
    fn memory(&self) -> usize {
        match self {
            MapSpec::Ar1 { .. } => 1,
            MapSpec::LinearAr { coeffs } => coeffs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    /// Oldest first; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    /// Master seed; there is no default.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    /// Defaults to available parallelism; never changes results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_level() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: Kind,
    pub model: ModelSpec,
    #[serde(default)]
    pub grids: Grids,
    pub sampling: Sampling,
    /// Exit level for exit-action, mc-exceedance, exit-time and survival-check.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Number of blocks for survival-check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::at(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.model.noise.build().map_err(|e| ConfigError::at("model.noise", e))?;
        if let (Some(map), Some(init)) = (&self.model.map, &self.model.initial) {
            if init.len() != map.memory() {
                return Err(ConfigError::at(
                    "model.initial",
                    format!("map needs {} initial values, got {}", map.memory(), init.len()),
                ));
            }
        }
        if let Some(MapSpec::LinearAr { coeffs }) = &self.model.map {
            if coeffs.is_empty() {
                return Err(ConfigError::at("model.map.coeffs", "must be nonempty"));
            }
        }
        if let Some(w) = self.sampling.workers {
            if w == 0 {
                return Err(ConfigError::at("sampling.workers", "must be at least 1"));
            }
        }
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(ConfigError::at("level", "must be finite and nonnegative"));
        }

        let needs_map = !matches!(self.kind, Kind::LegendreTable | Kind::ConditionsCheck);
        if needs_map && self.model.map.is_none() {
            return Err(ConfigError::at("model.map", "required for this kind"));
        }
        let (eps, v, horizon, n, cap) = match self.kind {
            Kind::LegendreTable => (false, true, false, false, false),
            Kind::ConditionsCheck => (true, true, false, false, false),
            Kind::ExitAction => (false, false, true, false, false),
            Kind::McExceedance => (true, false, true, true, false),
            Kind::ExitTime => (true, false, false, true, true),
            Kind::SurvivalCheck => (true, false, true, true, false),
        };
        if eps {
            let g = required("grids.eps", &self.grids.eps)?;
            if g.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                return Err(ConfigError::at("grids.eps", "entries must be positive and finite"));
            }
        }
        if v {
            let g = required("grids.v", &self.grids.v)?;
            if g.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::at("grids.v", "entries must be finite"));
            }
        }
        if horizon {
            let g = required("grids.horizon", &self.grids.horizon)?;
            if g.contains(&0) {
                return Err(ConfigError::at("grids.horizon", "entries must be at least 1"));
            }
        }
        if n && self.sampling.n.unwrap_or(0) == 0 {
            return Err(ConfigError::at("sampling.n", "required, at least 1"));
        }
        if cap && self.sampling.cap.unwrap_or(0) == 0 {
            return Err(ConfigError::at("sampling.cap", "required, at least 1"));
        }
        if self.kind == Kind::SurvivalCheck {
            if self.blocks.unwrap_or(0) == 0 {
                return Err(ConfigError::at("blocks", "required, at least 1"));
            }
            if self.grids.eps.as_ref().is_some_and(|e| e.len() != 1) {
                return Err(ConfigError::at("grids.eps", "survival-check takes a single eps"));
            }
            if self.grids.horizon.as_ref().is_some_and(|h| h.len() != 1) {
                return Err(ConfigError::at("grids.horizon", "survival-check takes a single block length"));
            }
        }
        if matches!(self.kind, Kind::ExitTime | Kind::SurvivalCheck) && !(self.level > 0.0) {
            return Err(ConfigError::at("level", "must be positive"));
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseModel {
        self.model.noise.build().expect("validated")
    }

    /// The recursion at noise scale `eps`.
    pub fn recursion(&self, eps: f64) -> Result<RecursionModel, String> {
        let map = self.model.map.as_ref().ok_or("model.map is required")?;
        let initial = self.model.initial.clone().unwrap_or_else(|| vec![0.0; map.memory()]);
        let transition = match map {
            MapSpec::Ar1 { a } => TransitionMap::ScalarAr1 { a: *a },
            MapSpec::LinearAr { coeffs } => TransitionMap::LinearAr { coeffs: coeffs.clone() },
        };
        RecursionModel::new(transition, initial, self.noise(), eps).map_err(|e| e.to_string())
    }
}

fn required<'a, T>(path: &str, grid: &'a Option<Vec<T>>) -> Result<&'a [T], ConfigError> {
    match grid {
        Some(g) if !g.is_empty() => Ok(g),
        Some(_) => Err(ConfigError::at(path, "must be nonempty")),
        None => Err(ConfigError::at(path, "required for this kind")),
    }
}
