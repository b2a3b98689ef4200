//! Run configuration: one TOML file with optional `[world]`, `[train]` and
//! `[attribute_train]` tables. Missing keys take their defaults; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::synth::WorldConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    /// Identity-head training.
    pub train: TrainConfig,
    /// Attribute-head training; falls back to `[train]` when absent.
    pub attribute_train: Option<TrainConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_owned();
            Error::Config {
                field,
                message: e.to_string().trim().to_owned(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        if let Some(a) = &self.attribute_train {
            a.validate()?;
        }
        Ok(())
    }

    pub fn attribute_train(&self) -> &TrainConfig {
        self.attribute_train.as_ref().unwrap_or(&self.train)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
