//! Exact-match metrics and breakdowns, micro-averaged over documents.

mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use report::{recall_csv, EvalReport, Section};

use crate::kb::NameType;
use crate::preprocess::Document;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when TP + FP = 0 and precision is reported as 0.
    pub precision_undefined: bool,
    /// Set when TP + FN = 0 and recall is reported as 0.
    pub recall_undefined: bool,
}

impl PrfReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            precision_undefined: tp + fp == 0,
            recall_undefined: tp + fn_ == 0,
        }
    }

    /// The same predictions scored against `extra` more gold mentions that
    /// were never predicted.
    pub fn with_missed(&self, extra: usize) -> Self {
        Self::from_counts(self.tp, self.fp, self.fn_ + extra)
    }
}

/// A gold mention over a preprocessed document.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoldMention {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
    pub type_id: String,
}

impl GoldMention {
    pub fn from_documents(docs: &[Document]) -> Vec<GoldMention> {
        docs.iter()
            .flat_map(|d| {
                d.mentions.iter().map(move |m| GoldMention {
                    doc_id: d.doc_id.clone(),
                    sentence: m.sentence,
                    start: m.start,
                    end: m.end,
                    entity_id: m.entity_id.clone(),
                    type_id: m.semantic_type.clone(),
                })
            })
            .collect()
    }
}

/// A predicted mention: JSONL output of the selector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub entity_id: String,
    pub type_id: String,
    /// Name type of the lexical match that produced the entity.
    pub name_type: NameType,
    pub alias: String,
    /// Selector score.
    pub score: f64,
    /// Linker probability.
    pub p: f64,
}

type SpanKey<'a> = (&'a str, usize, usize, usize);

trait Spanned {
    fn span(&self) -> SpanKey<'_>;
}

impl Spanned for GoldMention {
    fn span(&self) -> SpanKey<'_> {
        (&self.doc_id, self.sentence, self.start, self.end)
    }
}

impl Spanned for Prediction {
    fn span(&self) -> SpanKey<'_> {
        (&self.doc_id, self.sentence, self.start, self.end)
    }
}

fn overlaps(a: SpanKey<'_>, b: SpanKey<'_>) -> bool {
    a.0 == b.0 && a.1 == b.1 && a.2 < b.3 && b.2 < a.3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MentionEval {
    pub report: PrfReport,
    /// Identical predictions counted once.
    pub duplicates: usize,
}

fn set_prf<K: Eq + std::hash::Hash>(gold: HashSet<K>, pred: Vec<K>) -> MentionEval {
    let total = pred.len();
    let pred: HashSet<K> = pred.into_iter().collect();
    let tp = pred.iter().filter(|k| gold.contains(k)).count();
    MentionEval {
        report: PrfReport::from_counts(tp, pred.len() - tp, gold.len() - tp),
        duplicates: total - pred.len(),
    }
}

/// Exact span and entity match.
pub fn mention_level_prf(gold: &[GoldMention], pred: &[Prediction]) -> MentionEval {
    set_prf(
        gold.iter()
            .map(|g| (g.span(), g.entity_id.as_str()))
            .collect(),
        pred.iter()
            .map(|p| (p.span(), p.entity_id.as_str()))
            .collect(),
    )
}

/// Exact span and semantic type match, ignoring the entity.
pub fn ner_prf(gold: &[GoldMention], pred: &[Prediction]) -> MentionEval {
    set_prf(
        gold.iter()
            .map(|g| (g.span(), g.type_id.as_str()))
            .collect(),
        pred.iter()
            .map(|p| (p.span(), p.type_id.as_str()))
            .collect(),
    )
}

/// Per-document entity sets, ignoring locations.
pub fn document_level_prf(gold: &[GoldMention], pred: &[Prediction]) -> PrfReport {
    let g: HashSet<(&str, &str)> = gold
        .iter()
        .map(|m| (m.doc_id.as_str(), m.entity_id.as_str()))
        .collect();
    let p: HashSet<(&str, &str)> = pred
        .iter()
        .map(|m| (m.doc_id.as_str(), m.entity_id.as_str()))
        .collect();
    let tp = p.intersection(&g).count();
    PrfReport::from_counts(tp, p.len() - tp, g.len() - tp)
}

/// Mention-level counts with `dropped` gold mentions lost in preprocessing
/// added as false negatives.
pub fn raw_corpus_lower_bound(
    gold: &[GoldMention],
    pred: &[Prediction],
    dropped: usize,
) -> PrfReport {
    mention_level_prf(gold, pred).report.with_missed(dropped)
}

/// Ranked candidate entities for one gold span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub gold_entity: String,
    pub ranked: Vec<String>,
}

/// Fraction of gold spans whose entity is in the top `k`, for each `k`.
pub fn recall_at_k(lists: &[RankedCandidates], ks: &[usize]) -> Vec<(usize, f64)> {
    ks.iter()
        .map(|&k| {
            let hits = lists
                .iter()
                .filter(|l| l.ranked.iter().take(k).any(|e| *e == l.gold_entity))
                .count();
            let r = if lists.is_empty() {
                0.0
            } else {
                hits as f64 / lists.len() as f64
            };
            (k, r)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecall {
    pub stage: String,
    pub gold_in: usize,
    pub gold_out: usize,
    /// `None` when the stage saw no gold items.
    pub recall: Option<f64>,
}

impl StageRecall {
    pub fn new(stage: impl Into<String>, gold_in: usize, gold_out: usize) -> Self {
        Self {
            stage: stage.into(),
            gold_in,
            gold_out,
            recall: (gold_in > 0).then(|| gold_out as f64 / gold_in as f64),
        }
    }
}

/// Recall of each stage relative to the gold items in its own input.
/// `counts[i]` is the number of gold items surviving stage `i`; `initial`
/// the number entering the first stage.
pub fn stage_recall(initial: usize, counts: &[(&str, usize)]) -> Vec<StageRecall> {
    let mut gold_in = initial;
    counts
        .iter()
        .map(|&(name, out)| {
            let row = StageRecall::new(name, gold_in, out);
            gold_in = out;
            row
        })
        .collect()
}

#[derive(Clone, Debug)]
pub enum Subset<'a> {
    /// Entities in the given set.
    Seen(&'a HashSet<String>),
    /// Entities outside the given set.
    Unseen(&'a HashSet<String>),
    /// Predictions whose winning lexical match is an acronym, against gold
    /// mentions on the same spans.
    Acronym,
}

/// Entities annotated anywhere in `gold`.
pub fn entity_set(gold: &[GoldMention]) -> HashSet<String> {
    gold.iter().map(|g| g.entity_id.clone()).collect()
}

pub fn subset_prf(gold: &[GoldMention], pred: &[Prediction], subset: &Subset<'_>) -> MentionEval {
    match subset {
        Subset::Seen(s) | Subset::Unseen(s) => {
            let keep_seen = matches!(subset, Subset::Seen(_));
            let keep = |e: &str| s.contains(e) == keep_seen;
            let g: Vec<GoldMention> = gold
                .iter()
                .filter(|m| keep(&m.entity_id))
                .cloned()
                .collect();
            let p: Vec<Prediction> = pred
                .iter()
                .filter(|m| keep(&m.entity_id))
                .cloned()
                .collect();
            mention_level_prf(&g, &p)
        }
        Subset::Acronym => {
            let p: Vec<Prediction> = pred
                .iter()
                .filter(|m| m.name_type == NameType::Acronym)
                .cloned()
                .collect();
            let spans: HashSet<SpanKey<'_>> = p.iter().map(|m| m.span()).collect();
            let g: Vec<GoldMention> = gold
                .iter()
                .filter(|m| spans.contains(&m.span()))
                .cloned()
                .collect();
            mention_level_prf(&g, &p)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub false_positives: usize,
    /// Gold mention on the same span, other entity.
    pub correct_span_bad_entity: f64,
    /// Sub-count of the above where the semantic type agrees.
    pub correct_span_and_type: f64,
    /// Gold mention of the same entity on an overlapping, unequal span.
    pub correct_entity_overlapping_span: f64,
    /// Sub-count of the above where the prediction strictly contains the
    /// gold span.
    pub correct_entity_containing_span: f64,
}

pub fn error_breakdown(gold: &[GoldMention], pred: &[Prediction]) -> ErrorBreakdown {
    let exact: HashSet<(SpanKey<'_>, &str)> = gold
        .iter()
        .map(|g| (g.span(), g.entity_id.as_str()))
        .collect();
    let mut by_span: HashMap<SpanKey<'_>, Vec<&GoldMention>> = HashMap::new();
    let mut by_doc: HashMap<&str, Vec<&GoldMention>> = HashMap::new();
    for g in gold {
        by_span.entry(g.span()).or_default().push(g);
        by_doc.entry(&g.doc_id).or_default().push(g);
    }
    let fps: BTreeSet<(SpanKey<'_>, &str, &str)> = pred
        .iter()
        .filter(|p| !exact.contains(&(p.span(), p.entity_id.as_str())))
        .map(|p| (p.span(), p.entity_id.as_str(), p.type_id.as_str()))
        .collect();
    let (mut span_bad, mut span_type, mut overlap, mut contain) = (0usize, 0usize, 0usize, 0usize);
    for &(span, entity, ty) in &fps {
        if let Some(gs) = by_span.get(&span) {
            span_bad += 1;
            if gs.iter().any(|g| g.type_id == ty) {
                span_type += 1;
            }
        }
        let same_entity = by_doc
            .get(span.0)
            .into_iter()
            .flatten()
            .filter(|g| g.entity_id == entity && g.span() != span && overlaps(g.span(), span));
        let (mut o, mut c) = (false, false);
        for g in same_entity {
            o = true;
            c |= span.2 <= g.start && g.end <= span.3;
        }
        overlap += o as usize;
        contain += c as usize;
    }
    let n = fps.len();
    let frac = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    ErrorBreakdown {
        false_positives: n,
        correct_span_bad_entity: frac(span_bad),
        correct_span_and_type: frac(span_type),
        correct_entity_overlapping_span: frac(overlap),
        correct_entity_containing_span: frac(contain),
    }
}

/// Group predictions by document, in document id order.
pub fn by_document(pred: &[Prediction]) -> BTreeMap<&str, Vec<&Prediction>> {
    let mut map: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in pred {
        map.entry(&p.doc_id).or_default().push(p);
    }
    map
}
