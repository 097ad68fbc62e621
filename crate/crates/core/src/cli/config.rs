//! JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::connector::{Stage, TrainConfig};
use crate::encoder::{EncoderKind, EncoderSpec};
use crate::pyramid::ScaleSet;
use crate::synth::{MixPlan, ProviderConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub scale_set: ScaleSet,
    pub encoder: EncoderSection,
    pub train: TrainSection,
    pub providers: ProvidersSection,
    pub mix: MixPlan,
    pub paths: PathsSection,
}


/// Tile encoder settings. The native input side comes from `scale_set.base`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub patch: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            kind: EncoderKind::SeededLinear,
            patch: 14,
            dim: 8,
            seed: 0,
        }
    }
}

/// Connector training settings. Unset optimizer fields fall back to the
/// stage defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub stage: Stage,
    pub hidden: usize,
    pub init_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            stage: Stage::ConnectorPretrain,
            hidden: 64,
            init_seed: 0,
            learning_rate: None,
            global_batch: None,
            epochs: None,
            warmup_ratio: None,
            weight_decay: None,
            seed: None,
        }
    }
}

impl TrainSection {
    pub fn resolve(&self) -> TrainConfig {
        let mut cfg = TrainConfig::for_stage(self.stage);
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.global_batch {
            cfg.global_batch = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.warmup_ratio {
            cfg.warmup_ratio = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersSection {
    #[serde(rename = "A")]
    pub a: ProviderConfig,
    #[serde(rename = "B")]
    pub b: ProviderConfig,
}

impl Default for ProvidersSection {
    fn default() -> Self {
        Self {
            a: ProviderConfig::default_a(),
            b: ProviderConfig::default_b(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fewshots: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            kind: self.encoder.kind,
            base: self.scale_set.base(),
            patch: self.encoder.patch,
            dim: self.encoder.dim,
            seed: self.encoder.seed,
        }
    }

    /// Checks every section against the preconditions of its module.
    pub fn validate(&self) -> Result<(), String> {
        self.encoder_spec()
            .validate()
            .map_err(|e| format!("encoder: {e}"))?;
        if self.train.hidden == 0 {
            return Err("train.hidden must be >= 1".into());
        }
        self.train
            .resolve()
            .validate()
            .map_err(|e| format!("train: {e}"))?;
        self.providers.a.validate().map_err(|e| format!("providers.A: {e}"))?;
        self.providers.b.validate().map_err(|e| format!("providers.B: {e}"))?;
        if !(0.0..=1.0).contains(&self.mix.ratio_a) {
            return Err(format!("mix.ratio_a {} is outside [0, 1]", self.mix.ratio_a));
        }
        Ok(())
    }
}
