//! Cross-encoder plus feature head, shared by the linker and the selector.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bins::BinningSpec;
use super::head::{FeatureHead, HeadCache, HeadConfig, HeadFeatures};
use crate::encoder::{
    build_cross_input, load_checkpoint, save_checkpoint, CrossInput, DocPieces, Encoder,
    EncoderCache, EncoderConfig, Params, Vocabulary,
};
use crate::error::{Error, Result};
use crate::kb::AliasTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Linker,
    Selector,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Linker => "linker",
            Role::Selector => "selector",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub role: Role,
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    pub score_bins: BinningSpec,
    pub prob_bins: BinningSpec,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    spec: ModelSpec,
    vocab: Vocabulary,
    #[serde(default)]
    notes: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    encoder: EncoderCache<f64>,
    head: HeadCache,
}

#[derive(Clone, Debug)]
pub struct ScoringModel {
    spec: ModelSpec,
    vocab: Vocabulary,
    encoder: Encoder,
    head: FeatureHead,
    params: Params<f64>,
    notes: serde_json::Value,
}

impl ScoringModel {
    /// Fresh model with random weights drawn from `seed`.
    pub fn new(spec: ModelSpec, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::layout(spec, vocab, Some(&mut rng))
    }

    fn layout(
        spec: ModelSpec,
        vocab: Vocabulary,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Self> {
        let mut params = Params::new();
        let encoder =
            Encoder::register(&spec.encoder, vocab.len(), &mut params, rng.as_deref_mut())?;
        let prob_bins = (spec.role == Role::Selector).then(|| spec.prob_bins.clone());
        let head = FeatureHead::register(
            &spec.head,
            spec.encoder.hidden,
            spec.score_bins.clone(),
            prob_bins,
            &mut params,
            rng,
        );
        Ok(Self {
            spec,
            vocab,
            encoder,
            head,
            params,
            notes: serde_json::Value::Null,
        })
    }

    pub fn role(&self) -> Role {
        self.spec.role
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &Params<f64> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<f64> {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Params<f64>) -> Result<()> {
        self.params.assign_from(params)
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn head(&self) -> &FeatureHead {
        &self.head
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Free-form training notes stored with the checkpoint.
    pub fn notes(&self) -> &serde_json::Value {
        &self.notes
    }

    pub fn set_notes(&mut self, notes: serde_json::Value) {
        self.notes = notes;
    }

    /// Entity text for this role: type and primary name for the linker,
    /// type and matched alias for the selector.
    pub fn entity_text(&self, table: &AliasTable, entity_id: &str, alias: &str) -> Option<String> {
        match self.spec.role {
            Role::Linker => table.linker_text(entity_id),
            Role::Selector => table.selector_text(entity_id, alias),
        }
    }

    pub fn input(
        &self,
        doc: &DocPieces,
        sentence: usize,
        start: usize,
        end: usize,
        entity_text: &str,
    ) -> CrossInput {
        build_cross_input(
            doc,
            sentence,
            start,
            end,
            entity_text,
            &self.vocab,
            self.spec.encoder.max_len,
        )
    }

    pub fn forward<R: Rng>(
        &self,
        params: &Params<f64>,
        x: &CrossInput,
        f: &HeadFeatures,
        dropout: Option<&mut R>,
    ) -> Result<(f64, ModelCache)> {
        let (pooled, encoder) = self.encoder.forward(params, x)?;
        let (score, head) = self.head.forward(params, &pooled, f, dropout);
        Ok((score, ModelCache { encoder, head }))
    }

    pub fn backward(
        &self,
        params: &Params<f64>,
        cache: &ModelCache,
        dscore: f64,
        g: &mut Params<f64>,
    ) {
        let dpooled = self.head.backward(params, &cache.head, dscore, g);
        self.encoder.backward(params, &cache.encoder, &dpooled, g);
    }

    /// Inference score, without dropout.
    pub fn score(&self, x: &CrossInput, f: &HeadFeatures) -> Result<f64> {
        Ok(self.forward::<ChaCha8Rng>(&self.params, x, f, None)?.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Metadata {
            spec: self.spec.clone(),
            vocab: self.vocab.clone(),
            notes: self.notes.clone(),
        };
        save_checkpoint(path, &serde_json::to_string(&meta)?, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, params) = load_checkpoint(path)?;
        let meta: Metadata = serde_json::from_str(&meta)
            .map_err(|e| Error::format("checkpoint", format!("bad metadata: {e}")))?;
        let mut model = Self::layout(meta.spec, meta.vocab, None)?;
        model.params.assign_from(params)?;
        model.notes = meta.notes;
        Ok(model)
    }
}
