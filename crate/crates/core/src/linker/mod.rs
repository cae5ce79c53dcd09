//! Span linking: rerank each span's lexical candidates with the
//! cross-encoder and normalize over them.

mod bins;
mod head;
mod model;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bins::BinningSpec;
pub use head::{FeatureHead, HeadCache, HeadConfig, HeadFeatures};
pub use model::{ModelCache, ModelSpec, Role, ScoringModel};

use crate::candgen::{CandidateGenerator, LexicalMatch, SpanCandidates};
use crate::encoder::tensor::softmax as softmax_f64;
use crate::encoder::{CrossInput, DocPieces, Params};
use crate::error::{Error, Result};
use crate::kb::{AliasTable, NameType};
use crate::optim::{Adam, AdamConfig, Schedule};
use crate::preprocess::Document;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkerConfig {
    pub lr: f64,
    pub epochs: usize,
    pub warmup_frac: f64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// K_L: linked candidates kept per span.
    pub top_k: usize,
    pub adam: AdamConfig,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            epochs: 3,
            warmup_frac: 0.1,
            patience: None,
            top_k: 1,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkedCandidate {
    pub entity_id: String,
    pub alias: String,
    pub name_type: NameType,
    pub type_id: String,
    /// Lexical score s_e.
    pub score: f64,
    /// Linker probability.
    pub p: f64,
}

/// Linked-candidate JSONL record: the candidate record with `p` per match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkedSpan {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub matches: Vec<LinkedCandidate>,
}

/// Softmax over one span's logits; empty in, empty out.
pub fn linker_distribution(logits: &[f64]) -> Vec<f64> {
    softmax_f64(logits)
}

/// Cross-entropy of `gold` under softmax(logits), and its gradient.
pub fn linker_loss(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let p = softmax_f64(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    let mut grad = p;
    grad[gold] -= 1.0;
    (lse - logits[gold], grad)
}

fn features(m: &LexicalMatch) -> HeadFeatures {
    HeadFeatures {
        name_type: m.name_type,
        lexical_score: m.score,
        linker_prob: 0.0,
    }
}

/// One gold mention with its candidate inputs; `gold` indexes the correct
/// candidate.
#[derive(Clone, Debug)]
pub struct LinkerExample {
    pub inputs: Vec<CrossInput>,
    pub features: Vec<HeadFeatures>,
    pub gold: usize,
}

#[derive(Clone, Debug, Default)]
pub struct LinkerData {
    pub examples: Vec<LinkerExample>,
    pub mentions: usize,
    /// Gold mentions whose entity was not retrieved.
    pub excluded: usize,
}

/// Build candidate inputs for every gold mention of `docs`.
pub fn linker_examples(
    model: &ScoringModel,
    generator: &CandidateGenerator,
    docs: &[Document],
) -> Result<LinkerData> {
    let mut data = LinkerData::default();
    let table = generator.table();
    for doc in docs {
        let pieces = DocPieces::new(doc, model.vocab());
        for m in &doc.mentions {
            data.mentions += 1;
            let matches = generator.generate(doc.span_text(m.sentence, m.start, m.end));
            let Some(gold) = matches.iter().position(|c| c.entity_id == m.entity_id) else {
                data.excluded += 1;
                continue;
            };
            let mut inputs = Vec::with_capacity(matches.len());
            for c in &matches {
                let text = entity_text(model, table, c)?;
                inputs.push(model.input(&pieces, m.sentence, m.start, m.end, &text));
            }
            data.examples.push(LinkerExample {
                inputs,
                features: matches.iter().map(features).collect(),
                gold,
            });
        }
    }
    Ok(data)
}

fn entity_text(model: &ScoringModel, table: &AliasTable, m: &LexicalMatch) -> Result<String> {
    model
        .entity_text(table, &m.entity_id, &m.alias)
        .ok_or_else(|| Error::Invalid(format!("entity {} is not in the alias table", m.entity_id)))
}

/// Logits of every candidate of an example, without dropout.
pub fn example_logits(
    model: &ScoringModel,
    params: &Params<f64>,
    ex: &LinkerExample,
) -> Result<Vec<f64>> {
    ex.inputs
        .iter()
        .zip(&ex.features)
        .map(|(x, f)| Ok(model.forward::<ChaCha8Rng>(params, x, f, None)?.0))
        .collect()
}

/// Loss of one example and its gradient accumulated into `g`.
pub fn example_loss_grad(
    model: &ScoringModel,
    params: &Params<f64>,
    ex: &LinkerExample,
    g: &mut Params<f64>,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let mut logits = Vec::with_capacity(ex.inputs.len());
    let mut caches = Vec::with_capacity(ex.inputs.len());
    for (x, f) in ex.inputs.iter().zip(&ex.features) {
        let (l, c) = model.forward(params, x, f, dropout.as_deref_mut())?;
        logits.push(l);
        caches.push(c);
    }
    let (loss, dlogits) = linker_loss(&logits, ex.gold);
    for (c, &d) in caches.iter().zip(&dlogits) {
        model.backward(params, c, d, g);
    }
    Ok(loss)
}

/// Fraction of examples whose gold candidate has the highest logit; the
/// earlier candidate wins ties.
pub fn recall_at_1(model: &ScoringModel, data: &LinkerData) -> Result<f64> {
    if data.examples.is_empty() {
        return Ok(0.0);
    }
    let hits: Result<Vec<bool>> = data
        .examples
        .par_iter()
        .map(|ex| {
            let logits = example_logits(model, model.params(), ex)?;
            let best = logits
                .iter()
                .enumerate()
                .fold(0, |b, (i, &l)| if l > logits[b] { i } else { b });
            Ok(best == ex.gold)
        })
        .collect();
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkerEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub recall_at_1: f64,
}

/// Train with one optimizer step per gold mention. The parameters of the
/// epoch with the best recall@1 on `validation` (the training data when
/// absent) are kept.
pub fn train_linker(
    model: &mut ScoringModel,
    train: &LinkerData,
    validation: Option<&LinkerData>,
    config: &LinkerConfig,
    seed: u64,
) -> Result<Vec<LinkerEpoch>> {
    if model.role() != Role::Linker {
        return Err(Error::Invalid("train_linker needs a linker model".into()));
    }
    if train.examples.is_empty() {
        return Err(Error::NoTrainingData(format!(
            "none of {} gold mentions has its entity among the candidates",
            train.mentions
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = Schedule::new(
        config.lr,
        config.epochs * train.examples.len(),
        config.warmup_frac,
    );
    let mut adam = Adam::new(model.params(), config.adam.clone());
    let mut grads = model.params().zeros_like();
    let mut order: Vec<usize> = (0..train.examples.len()).collect();
    let mut best: Option<(f64, Params<f64>)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            grads.fill_zero();
            total += example_loss_grad(
                model,
                model.params(),
                &train.examples[i],
                &mut grads,
                Some(&mut rng),
            )?;
            let lr = schedule.at(adam.steps());
            adam.update(model.params_mut(), &grads, lr);
        }
        let recall = recall_at_1(model, validation.unwrap_or(train))?;
        let entry = LinkerEpoch {
            epoch,
            mean_loss: total / order.len() as f64,
            recall_at_1: recall,
        };
        log::info!(
            "linker epoch {epoch}: loss {:.4}, recall@1 {:.4}",
            entry.mean_loss,
            entry.recall_at_1
        );
        log.push(entry);
        if best.as_ref().is_none_or(|(r, _)| recall > *r) {
            best = Some((recall, model.params().clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.set_params(params)?;
    }
    Ok(log)
}

fn rank(a: &LinkedCandidate, b: &LinkedCandidate) -> Ordering {
    b.p.total_cmp(&a.p)
        .then(b.score.total_cmp(&a.score))
        .then_with(|| a.entity_id.cmp(&b.entity_id))
}

/// Rerank the matches of each span and keep the top `k`. Ties go to the
/// higher lexical score, then the smaller entity id.
pub fn link_spans(
    model: &ScoringModel,
    table: &AliasTable,
    doc: &Document,
    spans: &[SpanCandidates],
    k: usize,
) -> Result<Vec<LinkedSpan>> {
    let pieces = DocPieces::new(doc, model.vocab());
    spans
        .par_iter()
        .map(|s| {
            let logits: Vec<f64> = s
                .matches
                .iter()
                .map(|m| {
                    let text = entity_text(model, table, m)?;
                    let x = model.input(&pieces, s.sentence, s.start, s.end, &text);
                    model.score(&x, &features(m))
                })
                .collect::<Result<_>>()?;
            let p = linker_distribution(&logits);
            let mut matches: Vec<LinkedCandidate> = s
                .matches
                .iter()
                .zip(p)
                .map(|(m, p)| LinkedCandidate {
                    entity_id: m.entity_id.clone(),
                    alias: m.alias.clone(),
                    name_type: m.name_type,
                    type_id: m.type_id.clone(),
                    score: m.score,
                    p,
                })
                .collect();
            matches.sort_by(rank);
            matches.truncate(k);
            Ok(LinkedSpan {
                doc_id: s.doc_id.clone(),
                sentence: s.sentence,
                start: s.start,
                end: s.end,
                text: s.text.clone(),
                matches,
            })
        })
        .collect()
}
