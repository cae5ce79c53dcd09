//! Pipeline configuration, stored as TOML with one table per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candgen::CandgenConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::linker::{BinningSpec, HeadConfig, LinkerConfig, ModelSpec, Role};
use crate::selector::SelectorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabConfig {
    pub min_count: usize,
    pub max_size: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            min_count: 1,
            max_size: 30_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinsConfig {
    /// Boundaries for bin_S over lexical scores.
    pub lexical: BinningSpec,
    /// Boundaries for bin_L over linker probabilities.
    pub probability: BinningSpec,
}

impl Default for BinsConfig {
    fn default() -> Self {
        Self {
            lexical: BinningSpec::lexical(),
            probability: BinningSpec::probability(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub candgen: CandgenConfig,
    pub vocab: VocabConfig,
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    pub bins: BinsConfig,
    pub linker: LinkerConfig,
    pub selector: SelectorConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.candgen;
        if c.max_span_len == 0 || c.max_matches == 0 {
            return Err(Error::Config(
                "max_span_len and max_matches must be positive".into(),
            ));
        }
        if c.word_weight.is_nan() || c.word_weight < 0.0 {
            return Err(Error::Config("word_weight must be non-negative".into()));
        }
        if self.linker.top_k == 0 {
            return Err(Error::Config("linker top_k must be positive".into()));
        }
        self.encoder.validate()?;
        self.selector.validate()
    }

    pub fn model_spec(&self, role: Role) -> ModelSpec {
        ModelSpec {
            role,
            encoder: self.encoder.clone(),
            head: self.head.clone(),
            score_bins: self.bins.lexical.clone(),
            prob_bins: self.bins.probability.clone(),
        }
    }
}
