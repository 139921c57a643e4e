use std::fs;

use reuse_inr::network::{presets, NetworkConfig};
use reuse_inr::training::TrainConfig;
use reuse_inr::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::ConfigArgs;

pub const RUN_CONFIG_VERSION: u32 = 1;

/// Preset used when neither `--config` nor `--preset` is given.
pub const DEFAULT_PRESET: &str = "desk";

/// Network and training settings of one run. Every key is required and
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let network = presets::by_name(name)
            .ok_or_else(|| Error::Usage(format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", "))))?;
        Ok(RunConfig { version: RUN_CONFIG_VERSION, network, train: TrainConfig::desk() })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rc: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if rc.version != RUN_CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported run config version {}", rc.version)));
        }
        rc.network.validate()?;
        rc.train.validate()?;
        Ok(rc)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }
}

/// The run config selected by the flags, with seed and epoch overrides
/// applied. Also returns the config path for the manifest.
pub fn resolve(args: &ConfigArgs) -> Result<(RunConfig, Option<String>)> {
    let (mut rc, path) = match &args.config {
        Some(p) => (RunConfig::from_text(&fs::read_to_string(p)?)?, Some(p.display().to_string())),
        None => (RunConfig::preset(args.preset.as_deref().unwrap_or(DEFAULT_PRESET))?, None),
    };
    if let Some(seed) = args.seed {
        rc.train.seed = seed;
    }
    if let Some(f) = args.scale_epochs {
        rc.train = rc.train.scaled(f)?;
    }
    Ok((rc, path))
}
