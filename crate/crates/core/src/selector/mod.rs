//! Linked span selection: score (span, entity, probability) triples with a
//! thresholded max-margin objective and decide which spans are mentions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{CrossInput, DocPieces, Params};
use crate::error::{Error, Result};
use crate::eval::{document_level_prf, mention_level_prf, GoldMention, Prediction};
use crate::kb::AliasTable;
use crate::linker::{HeadFeatures, LinkedCandidate, LinkedSpan, Role, ScoringModel};
use crate::optim::{Adam, AdamConfig, Schedule};
use crate::preprocess::Document;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    #[default]
    Threshold,
    Greedy,
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Self::Threshold),
            "greedy" => Ok(Self::Greedy),
            _ => Err(Error::Config(format!("unknown inference mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    /// M.
    pub margin: f64,
    /// W+, used when no sweep is run.
    pub positive_weight: f64,
    /// W+ values tried by [`sweep_positive_weight`].
    pub weight_grid: Vec<f64>,
    /// τ.
    pub threshold: f64,
    pub mode: InferenceMode,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_frac: f64,
    pub patience: Option<usize>,
    /// Negatives kept per positive each epoch; all when unset.
    pub negative_ratio: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            positive_weight: 5.0,
            weight_grid: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            threshold: 0.0,
            mode: InferenceMode::Threshold,
            lr: 5e-6,
            batch_size: 64,
            epochs: 10,
            warmup_frac: 0.1,
            patience: None,
            negative_ratio: None,
            adam: AdamConfig::default(),
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if self.threshold.is_nan() {
            return Err(Error::Config("threshold is NaN".into()));
        }
        Ok(())
    }
}

/// Thresholded max-margin loss of one score and its derivative.
pub fn selector_loss(s: f64, positive: bool, margin: f64, positive_weight: f64) -> (f64, f64) {
    if positive {
        if s < margin {
            (positive_weight * (margin - s), -positive_weight)
        } else {
            (0.0, 0.0)
        }
    } else if s > -margin {
        (margin + s, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// A linked span with one of its linked entities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorSample {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub candidate: LinkedCandidate,
    /// The span and entity match a gold mention exactly.
    pub label: bool,
}

impl SelectorSample {
    pub fn features(&self) -> HeadFeatures {
        HeadFeatures {
            name_type: self.candidate.name_type,
            lexical_score: self.candidate.score,
            linker_prob: self.candidate.p,
        }
    }

    pub fn to_prediction(&self, score: f64) -> Prediction {
        Prediction {
            doc_id: self.doc_id.clone(),
            sentence: self.sentence,
            start: self.start,
            end: self.end,
            text: self.text.clone(),
            entity_id: self.candidate.entity_id.clone(),
            type_id: self.candidate.type_id.clone(),
            name_type: self.candidate.name_type,
            alias: self.candidate.alias.clone(),
            score,
            p: self.candidate.p,
        }
    }
}

/// One sample per linked candidate, labeled against `gold`.
pub fn selector_samples(linked: &[LinkedSpan], gold: &[GoldMention]) -> Vec<SelectorSample> {
    let keys: HashSet<(&str, usize, usize, usize, &str)> = gold
        .iter()
        .map(|g| {
            (
                g.doc_id.as_str(),
                g.sentence,
                g.start,
                g.end,
                g.entity_id.as_str(),
            )
        })
        .collect();
    linked
        .iter()
        .flat_map(|s| {
            s.matches.iter().map(|c| SelectorSample {
                doc_id: s.doc_id.clone(),
                sentence: s.sentence,
                start: s.start,
                end: s.end,
                text: s.text.clone(),
                candidate: c.clone(),
                label: keys.contains(&(
                    s.doc_id.as_str(),
                    s.sentence,
                    s.start,
                    s.end,
                    c.entity_id.as_str(),
                )),
            })
        })
        .collect()
}

/// A sample with its selector input.
#[derive(Clone, Debug)]
pub struct SelectorExample {
    pub sample: SelectorSample,
    pub input: CrossInput,
    pub features: HeadFeatures,
}

/// Build selector inputs; every sample's document must be in `docs`.
pub fn selector_examples(
    model: &ScoringModel,
    table: &AliasTable,
    docs: &[Document],
    samples: Vec<SelectorSample>,
) -> Result<Vec<SelectorExample>> {
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut pieces: HashMap<&str, DocPieces> = HashMap::new();
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let doc = *by_id.get(sample.doc_id.as_str()).ok_or_else(|| {
            Error::Invalid(format!(
                "sample refers to unknown document {}",
                sample.doc_id
            ))
        })?;
        let p = pieces
            .entry(doc.doc_id.as_str())
            .or_insert_with(|| DocPieces::new(doc, model.vocab()));
        let text = model
            .entity_text(table, &sample.candidate.entity_id, &sample.candidate.alias)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "entity {} is not in the alias table",
                    sample.candidate.entity_id
                ))
            })?;
        let input = model.input(p, sample.sentence, sample.start, sample.end, &text);
        let features = sample.features();
        out.push(SelectorExample {
            sample,
            input,
            features,
        });
    }
    Ok(out)
}

/// Score every example with `params`, in parallel.
pub fn score_examples(
    model: &ScoringModel,
    params: &Params<f64>,
    examples: &[SelectorExample],
) -> Result<Vec<Prediction>> {
    examples
        .par_iter()
        .map(|ex| {
            let (s, _) = model.forward::<ChaCha8Rng>(params, &ex.input, &ex.features, None)?;
            Ok(ex.sample.to_prediction(s))
        })
        .collect()
}

/// Every prediction scoring strictly above `threshold`, in input order.
pub fn infer_threshold(scored: &[Prediction], threshold: f64) -> Vec<Prediction> {
    scored
        .iter()
        .filter(|p| p.score > threshold)
        .cloned()
        .collect()
}

fn overlap(a: &Prediction, b: &Prediction) -> bool {
    a.doc_id == b.doc_id && a.sentence == b.sentence && a.start < b.end && b.start < a.end
}

/// Earlier start, then longer span, then smaller entity id.
fn position_order(a: &Prediction, b: &Prediction) -> Ordering {
    (a.sentence, a.start)
        .cmp(&(b.sentence, b.start))
        .then(b.end.cmp(&a.end))
        .then_with(|| a.entity_id.cmp(&b.entity_id))
}

/// Non-overlapping subset of the threshold output: repeatedly take the
/// earliest-starting candidate, emit the best-scoring candidate overlapping
/// it and discard everything overlapping the emitted one.
pub fn infer_greedy(scored: &[Prediction], threshold: f64) -> Vec<Prediction> {
    let mut by_doc: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in scored.iter().filter(|p| p.score > threshold) {
        by_doc.entry(&p.doc_id).or_default().push(p);
    }
    let mut out = Vec::new();
    for (_, mut remaining) in by_doc {
        remaining.sort_by(|a, b| position_order(a, b));
        while let Some(&first) = remaining.first() {
            let best = remaining
                .iter()
                .copied()
                .filter(|p| overlap(p, first))
                .min_by(|a, b| {
                    b.score
                        .total_cmp(&a.score)
                        .then_with(|| position_order(a, b))
                })
                .expect("a span overlaps itself");
            out.push(best.clone());
            remaining.retain(|p| !overlap(p, best));
        }
    }
    out
}

pub fn infer(scored: &[Prediction], mode: InferenceMode, threshold: f64) -> Vec<Prediction> {
    match mode {
        InferenceMode::Threshold => infer_threshold(scored, threshold),
        InferenceMode::Greedy => infer_greedy(scored, threshold),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub doc_f1: f64,
    pub mention_f1: f64,
}

/// Validation examples and the gold mentions of their documents.
#[derive(Clone, Copy, Debug)]
pub struct Validation<'a> {
    pub examples: &'a [SelectorExample],
    pub gold: &'a [GoldMention],
}

fn evaluate(
    model: &ScoringModel,
    v: Validation<'_>,
    config: &SelectorConfig,
) -> Result<(f64, f64)> {
    let scored = score_examples(model, model.params(), v.examples)?;
    let pred = infer(&scored, config.mode, config.threshold);
    Ok((
        document_level_prf(v.gold, &pred).f1,
        mention_level_prf(v.gold, &pred).report.f1,
    ))
}

fn positives_as_gold(examples: &[SelectorExample]) -> Vec<GoldMention> {
    examples
        .iter()
        .filter(|e| e.sample.label)
        .map(|e| GoldMention {
            doc_id: e.sample.doc_id.clone(),
            sentence: e.sample.sentence,
            start: e.sample.start,
            end: e.sample.end,
            entity_id: e.sample.candidate.entity_id.clone(),
            type_id: e.sample.candidate.type_id.clone(),
        })
        .collect()
}

/// Mean loss of a batch with its gradient accumulated into `g`.
pub fn batch_loss_grad(
    model: &ScoringModel,
    params: &Params<f64>,
    batch: &[&SelectorExample],
    margin: f64,
    positive_weight: f64,
    g: &mut Params<f64>,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let (s, cache) = model.forward(params, &ex.input, &ex.features, dropout.as_deref_mut())?;
        let (loss, d) = selector_loss(s, ex.sample.label, margin, positive_weight);
        total += loss;
        if d != 0.0 {
            model.backward(params, &cache, d / n, g);
        }
    }
    Ok(total / n)
}

/// Train with mini-batches of mean hinge loss, keeping the parameters of
/// the epoch with the best validation document-level F1. Without
/// validation data the training examples are scored against their own
/// positive labels.
pub fn train_selector(
    model: &mut ScoringModel,
    train: &[SelectorExample],
    validation: Option<Validation<'_>>,
    config: &SelectorConfig,
    positive_weight: f64,
    seed: u64,
) -> Result<Vec<SelectorEpoch>> {
    config.validate()?;
    if model.role() != Role::Selector {
        return Err(Error::Invalid(
            "train_selector needs a selector model".into(),
        ));
    }
    let (positives, negatives): (Vec<&SelectorExample>, Vec<&SelectorExample>) =
        train.iter().partition(|e| e.sample.label);
    if positives.is_empty() {
        return Err(Error::NoTrainingData(format!(
            "none of {} selector samples is positive",
            train.len()
        )));
    }
    let own_gold;
    let validation = match validation {
        Some(v) => v,
        None => {
            own_gold = positives_as_gold(train);
            Validation {
                examples: train,
                gold: &own_gold,
            }
        }
    };
    let keep_negatives = |n: usize| match config.negative_ratio {
        Some(r) => ((positives.len() as f64 * r).ceil() as usize).min(n),
        None => n,
    };
    let pool_len = positives.len() + keep_negatives(negatives.len());
    let steps_per_epoch = pool_len.div_ceil(config.batch_size);
    let schedule = Schedule::new(
        config.lr,
        config.epochs * steps_per_epoch,
        config.warmup_frac,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(model.params(), config.adam.clone());
    let mut grads = model.params().zeros_like();
    let mut negatives = negatives;
    let mut best: Option<(f64, Params<f64>)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 1..=config.epochs {
        negatives.shuffle(&mut rng);
        let mut pool: Vec<&SelectorExample> = positives
            .iter()
            .chain(&negatives[..keep_negatives(negatives.len())])
            .copied()
            .collect();
        pool.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pool.chunks(config.batch_size) {
            grads.fill_zero();
            let loss = batch_loss_grad(
                model,
                model.params(),
                batch,
                config.margin,
                positive_weight,
                &mut grads,
                Some(&mut rng),
            )?;
            total += loss * batch.len() as f64;
            let lr = schedule.at(adam.steps());
            adam.update(model.params_mut(), &grads, lr);
        }
        let (doc_f1, mention_f1) = evaluate(model, validation, config)?;
        let entry = SelectorEpoch {
            epoch,
            mean_loss: total / pool.len() as f64,
            doc_f1,
            mention_f1,
        };
        log::info!(
            "selector W+={positive_weight} epoch {epoch}: loss {:.4}, doc F1 {:.4}, mention F1 {:.4}",
            entry.mean_loss,
            doc_f1,
            mention_f1
        );
        log.push(entry);
        if best.as_ref().is_none_or(|(f, _)| doc_f1 > *f) {
            best = Some((doc_f1, model.params().clone()));
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub positive_weight: f64,
    /// Best validation document-level F1 over the epochs.
    pub doc_f1: f64,
    /// Mention-level F1 at that epoch.
    pub mention_f1: f64,
    pub epochs: Vec<SelectorEpoch>,
}

/// Train one model per W+ in the grid, each from the weights of `init`, and
/// return the one with the best validation document-level F1 (the smaller
/// weight on ties) with one row per weight.
pub fn sweep_positive_weight(
    init: &ScoringModel,
    train: &[SelectorExample],
    validation: Option<Validation<'_>>,
    config: &SelectorConfig,
    seed: u64,
) -> Result<(ScoringModel, f64, Vec<SweepRow>)> {
    if config.weight_grid.is_empty() {
        return Err(Error::Config("weight_grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(config.weight_grid.len());
    let mut best: Option<(f64, f64, ScoringModel)> = None;
    for &w in &config.weight_grid {
        let mut model = init.clone();
        let epochs = train_selector(&mut model, train, validation, config, w, seed)?;
        let top = epochs
            .iter()
            .fold(&epochs[0], |b, e| if e.doc_f1 > b.doc_f1 { e } else { b });
        let row = SweepRow {
            positive_weight: w,
            doc_f1: top.doc_f1,
            mention_f1: top.mention_f1,
            epochs: epochs.clone(),
        };
        log::info!("selector sweep W+={w}: doc F1 {:.4}", row.doc_f1);
        if best.as_ref().is_none_or(|(f, _, _)| row.doc_f1 > *f) {
            best = Some((row.doc_f1, w, model));
        }
        rows.push(row);
    }
    let (_, w, model) = best.expect("grid is not empty");
    Ok((model, w, rows))
}

#[cfg(test)]
mod tests;
