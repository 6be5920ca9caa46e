//! Declarative run configuration: one TOML document covering synthesis,
//! training, localization and evaluation, plus the output directory. Every
//! command resolves the config (filling defaults and propagating the single
//! top-level seed) and writes the resolved document next to its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SynthSpec;
use crate::localization::{Scoring, VariantConfig};
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Localization section: a numbered variant preset with optional explicit
/// overrides of the proposal sources and scoring mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeConfig {
    pub variant: usize,
    pub nms_tiou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_p1: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_p2: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_p3: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scoring: Option<Scoring>,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            variant: 4,
            nms_tiou: 0.5,
            use_p1: None,
            use_p2: None,
            use_p3: None,
            scoring: None,
        }
    }
}

impl LocalizeConfig {
    pub fn variant_config(&self) -> Result<VariantConfig, ConfigError> {
        let mut cfg = VariantConfig::variant(self.variant)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.nms_tiou = self.nms_tiou;
        if let Some(p1) = self.use_p1 {
            cfg.use_p1 = p1;
        }
        if let Some(p2) = self.use_p2 {
            cfg.use_p2 = p2;
        }
        if let Some(p3) = self.use_p3 {
            cfg.use_p3 = p3;
        }
        if let Some(s) = self.scoring {
            cfg.scoring = s;
        }
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Which tIoU grid the evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    Thumos,
    Anet,
}

impl GridChoice {
    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            GridChoice::Thumos => crate::evaluation::thumos_grid(),
            GridChoice::Anet => crate::evaluation::anet_grid(),
        }
    }

    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "thumos" => Ok(GridChoice::Thumos),
            "anet" => Ok(GridChoice::Anet),
            other => Err(ConfigError::Invalid(format!(
                "unknown grid '{other}', expected 'thumos' or 'anet'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub grid: GridChoice,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid: GridChoice::Thumos,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; synthesis and training streams both derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub localize: LocalizeConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            synth: SynthSpec::default(),
            train: TrainConfig::default(),
            localize: LocalizeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML config file; unknown keys are rejected.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Propagates the master seed into the sub-configs.
    pub fn resolve(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.synth
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.localize.variant_config()?;
        Ok(())
    }

    /// Writes the resolved configuration next to the run outputs.
    pub fn write_resolved(&self, dir: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| ConfigError::Invalid(format!("cannot serialize config: {e}")))?;
        let path = dir.join("config_resolved.toml");
        std::fs::write(&path, text).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}
