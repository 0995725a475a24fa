//! Experiment configuration files (TOML, `schema_version = 1`).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;
use crate::classifiers::{ClassifierKind, ClassifierSpec};
use crate::features::{extended_features, FeatureSet, BASIC_FEATURES};
use crate::metrics::WeightMode;
use crate::prequential::{HarnessSettings, ModelEntry, ThresholdMode, BASELINE_ID};
use crate::synth::SynthConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        synth: SynthConfig,
    },
    /// Paths are relative to the configuration file.
    Csv {
        options: PathBuf,
        spx: PathBuf,
        vix: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePreset {
    Basic,
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<FeaturePreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl FeatureConfig {
    pub fn resolve(&self) -> Result<FeatureSet, ConfigError> {
        match (&self.preset, &self.names) {
            (Some(_), Some(_)) => Err(invalid("features", "give either preset or names, not both")),
            (None, None) => Err(invalid("features", "missing preset or names")),
            (Some(FeaturePreset::Basic), None) => {
                FeatureSet::new(BASIC_FEATURES).map_err(|e| invalid("features", e.to_string()))
            }
            (Some(FeaturePreset::Extended), None) => {
                FeatureSet::new(extended_features()).map_err(|e| invalid("features.preset", e.to_string()))
            }
            (None, Some(names)) => FeatureSet::parse(names).map_err(|e| invalid("features.names", e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrequentialConfig {
    pub split_months: u32,
    pub test_start: YearMonth,
    pub train_start: NaiveDate,
    /// Calendar days from trade date to the targeted expiry.
    pub tenor: i64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "one")]
    pub epochs: usize,
    #[serde(default = "one")]
    pub evaluate_every: usize,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub weight_mode: WeightMode,
}

fn default_repetitions() -> usize {
    5
}

fn one() -> usize {
    1
}

fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_cutoff")]
    pub since: NaiveDate,
    /// Model shown by the timeline verb when none is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline_model: Option<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            since: default_cutoff(),
            timeline_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub spec: ClassifierSpec,
}

impl ModelConfig {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| kind_name(self.spec.kind()))
    }
}

pub fn kind_name(kind: ClassifierKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Caps the ensemble size of tree ensembles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_estimators: Option<usize>,
    pub data: DataSource,
    pub features: FeatureConfig,
    pub prequential: PrequentialConfig,
    #[serde(default)]
    pub report: ReportConfig,
    pub models: Vec<ModelConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and makes CSV paths absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        if let DataSource::Csv { options, spx, vix } = &mut cfg.data {
            for p in [options, spx, vix] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if let DataSource::Synthetic { synth } = &self.data {
            synth.validate().map_err(|e| invalid("data.synth", e.to_string()))?;
        }
        self.features.resolve()?;
        let p = &self.prequential;
        if p.split_months == 0 {
            return Err(invalid("prequential.split_months", "must be at least 1"));
        }
        if p.tenor < 1 {
            return Err(invalid("prequential.tenor", "must be at least 1 day"));
        }
        if p.repetitions == 0 {
            return Err(invalid("prequential.repetitions", "must be at least 1"));
        }
        if p.epochs == 0 {
            return Err(invalid("prequential.epochs", "must be at least 1"));
        }
        if p.evaluate_every == 0 || p.evaluate_every > p.epochs {
            return Err(invalid("prequential.evaluate_every", "must be between 1 and epochs"));
        }
        let earliest = p
            .train_start
            .checked_add_months(Months::new(2 * p.split_months))
            .ok_or_else(|| invalid("prequential.train_start", "out of range"))?;
        if p.test_start.first_day() < earliest {
            return Err(invalid(
                "prequential.test_start",
                format!("must be at least two split windows after train_start ({earliest} or later)"),
            ));
        }
        if self.max_estimators == Some(0) {
            return Err(invalid("max_estimators", "must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(invalid("models", "at least one model is required"));
        }
        let mut seen = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            let id = m.id();
            if id.is_empty() || id == BASELINE_ID || id.contains([',', '\n', '"']) {
                return Err(invalid(&format!("models[{i}].id"), format!("{id:?} is reserved or invalid")));
            }
            if !seen.insert(id.clone()) {
                return Err(invalid(&format!("models[{i}].id"), format!("duplicate id {id:?}")));
            }
        }
        Ok(())
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.features.resolve().expect("validated")
    }

    pub fn harness_settings(&self) -> HarnessSettings {
        let p = &self.prequential;
        HarnessSettings {
            split_months: p.split_months,
            test_start: p.test_start,
            train_start: p.train_start,
            repetitions: p.repetitions,
            base_seed: self.base_seed,
            epochs: p.epochs,
            evaluate_every: p.evaluate_every,
            models: self
                .models
                .iter()
                .map(|m| ModelEntry {
                    id: m.id(),
                    spec: m.spec.clone(),
                })
                .collect(),
            threshold_mode: p.threshold_mode,
            weight_mode: p.weight_mode,
            max_estimators: self.max_estimators,
        }
    }

    /// Keeps only the models whose id is listed, in configuration order.
    pub fn retain_models(&mut self, ids: &[String]) -> Result<(), ConfigError> {
        for id in ids {
            if !self.models.iter().any(|m| m.id() == *id) {
                return Err(invalid("--models", format!("unknown model id {id:?}")));
            }
        }
        self.models.retain(|m| ids.contains(&m.id()));
        Ok(())
    }
}
