//! Stage orchestration over on-disk artifacts: KB directories, preprocessed
//! corpora, JSONL intermediates and checkpoints.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candgen::{AliasIndex, CandgenConfig, CandidateGenerator, SpanCandidates};
use crate::config::{PipelineConfig, VocabConfig};
use crate::encoder::{EncoderConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{
    document_level_prf, entity_set, error_breakdown, mention_level_prf, ner_prf,
    raw_corpus_lower_bound, stage_recall, subset_prf, EvalReport, GoldMention, Prediction,
    RankedCandidates, Subset,
};
use crate::io;
use crate::kb::{
    build_alias_table, read_ontology_tsv, AliasTable, BuildReport, NameCleaner, TypeHierarchy,
};
use crate::linker::{
    link_spans, linker_examples, train_linker, HeadConfig, LinkedSpan, LinkerConfig, LinkerData,
    LinkerEpoch, Role, ScoringModel,
};
use crate::preprocess::{
    emit_iob2, preprocess_document, read_definitions_tsv, Abbreviations, DocReport, Document,
    RawDocument, RawMention, Tokenizer,
};
use crate::selector::{
    infer, score_examples, selector_examples, selector_samples, sweep_positive_weight,
    train_selector, InferenceMode, SelectorConfig, SweepRow, Validation,
};

pub const ALIAS_FILE: &str = "alias.jsonl";
pub const INDEX_FILE: &str = "index.bin";
pub const VECTORIZERS_FILE: &str = "vectorizers.bin";
pub const BUILD_REPORT_FILE: &str = "build_report.json";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const PREPROCESS_REPORT_FILE: &str = "preprocess_report.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const LINKED_FILE: &str = "linked.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PREDICTIONS_PUBTATOR_FILE: &str = "predictions.pubtator";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Build the alias table from ontology files and write the KB directory.
pub fn build_kb(
    ontology: &Path,
    hierarchy: &Path,
    types: &Path,
    config: &CandgenConfig,
    out: &Path,
) -> Result<(AliasTable, BuildReport)> {
    let hierarchy = TypeHierarchy::load(hierarchy, types)?;
    let (table, report) = build_alias_table(
        read_ontology_tsv(io::open(ontology)?),
        &hierarchy,
        &NameCleaner::default(),
    )?;
    if table.is_empty() {
        return Err(Error::EmptyAliasTable(format!(
            "no usable alias in {} ({} records read)",
            ontology.display(),
            report.input_records
        )));
    }
    write_kb(&table, config, out)?;
    io::save_json(&out.join(BUILD_REPORT_FILE), &report)?;
    Ok((table, report))
}

/// Fit the index for `table` and write alias table, index and vectorizers.
pub fn write_kb(
    table: &AliasTable,
    config: &CandgenConfig,
    out: &Path,
) -> Result<CandidateGenerator> {
    create_dir(out)?;
    let gen = CandidateGenerator::build(table.clone(), config.clone())?;
    table.save(&out.join(ALIAS_FILE))?;
    gen.index().save(&out.join(INDEX_FILE))?;
    gen.index()
        .vectorizers()
        .save(&out.join(VECTORIZERS_FILE))?;
    Ok(gen)
}

/// Load a KB directory; `config` supplies the retrieval settings.
pub fn load_kb(dir: &Path, config: &CandgenConfig) -> Result<CandidateGenerator> {
    let table = AliasTable::load(&dir.join(ALIAS_FILE))?;
    let index = AliasIndex::load(&dir.join(INDEX_FILE))?;
    CandidateGenerator::from_parts(table, index, config.clone())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub documents: usize,
    pub raw_mentions: usize,
    pub mentions: usize,
    pub definitions: usize,
    pub documents_with_definitions: usize,
    pub dropped: usize,
    pub reports: Vec<DocReport>,
}

/// Abbreviation source for a corpus.
pub enum AbbreviationSource {
    Detect,
    /// `doc_id -> (short, long)` definitions.
    File(HashMap<String, Vec<(String, String)>>),
}

impl AbbreviationSource {
    pub fn load(path: &Path) -> Result<Self> {
        let mut map: HashMap<String, Vec<(String, String)>> = HashMap::new();
        for (doc, short, long) in read_definitions_tsv(io::open(path)?)? {
            map.entry(doc).or_default().push((short, long));
        }
        Ok(Self::File(map))
    }
}

pub fn preprocess_corpus(
    raw: &[RawDocument],
    abbreviations: &AbbreviationSource,
) -> (Vec<Document>, PreprocessSummary) {
    use rayon::prelude::*;
    let tokenizer = Tokenizer::default();
    let empty: Vec<(String, String)> = Vec::new();
    let results: Vec<(Document, DocReport)> = raw
        .par_iter()
        .map(|r| {
            let abbr = match abbreviations {
                AbbreviationSource::Detect => Abbreviations::Detect,
                AbbreviationSource::File(map) => {
                    Abbreviations::Given(map.get(&r.doc_id).unwrap_or(&empty))
                }
            };
            preprocess_document(r, abbr, &tokenizer)
        })
        .collect();
    let mut summary = PreprocessSummary::default();
    let mut docs = Vec::with_capacity(results.len());
    for (doc, report) in results {
        summary.documents += 1;
        summary.raw_mentions += report.raw_mentions;
        summary.mentions += report.mentions;
        summary.definitions += report.definitions;
        summary.documents_with_definitions += (report.definitions > 0) as usize;
        summary.dropped += report.dropped();
        summary.reports.push(report);
        docs.push(doc);
    }
    (docs, summary)
}

/// Write `documents.jsonl`, one IOB2 file per document under `iob2/`, and the
/// drop-count report.
pub fn write_preprocessed(
    out: &Path,
    docs: &[Document],
    summary: &PreprocessSummary,
) -> Result<()> {
    let iob = out.join("iob2");
    create_dir(&iob)?;
    io::save_jsonl(&out.join(DOCUMENTS_FILE), docs)?;
    for d in docs {
        let path = iob.join(format!("{}.iob2", d.doc_id));
        std::fs::write(&path, emit_iob2(d)?).map_err(|e| Error::io(&path, e))?;
    }
    io::save_json(&out.join(PREPROCESS_REPORT_FILE), summary)
}

pub fn load_documents(dir: &Path) -> Result<Vec<Document>> {
    io::load_jsonl(&dir.join(DOCUMENTS_FILE))
}

/// Mentions dropped in preprocessing, when the directory has a report.
pub fn load_dropped(dir: &Path) -> Result<Option<usize>> {
    let path = dir.join(PREPROCESS_REPORT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let summary: PreprocessSummary = io::load_json(&path)?;
    Ok(Some(summary.dropped))
}

/// Word-piece vocabulary over every entity text the models can see plus the
/// training documents.
pub fn build_vocabulary(table: &AliasTable, docs: &[Document], config: &VocabConfig) -> Vocabulary {
    let mut texts: Vec<String> = Vec::with_capacity(table.len() * 2 + docs.len());
    let mut seen = HashSet::new();
    for e in table.entries() {
        if seen.insert(e.entity_id.as_str()) {
            texts.extend(table.linker_text(&e.entity_id));
        }
        texts.extend(table.selector_text(&e.entity_id, &e.name));
    }
    texts.extend(docs.iter().map(|d| d.text.clone()));
    Vocabulary::build(&texts, config.min_count, config.max_size)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkerSummary {
    pub mentions: usize,
    pub excluded: usize,
    pub epochs: Vec<LinkerEpoch>,
}

pub fn train_linker_stage(
    gen: &CandidateGenerator,
    train_docs: &[Document],
    validation_docs: Option<&[Document]>,
    config: &PipelineConfig,
) -> Result<(ScoringModel, LinkerSummary)> {
    let vocab = build_vocabulary(gen.table(), train_docs, &config.vocab);
    let mut model = ScoringModel::new(config.model_spec(Role::Linker), vocab, config.seed)?;
    let train = linker_examples(&model, gen, train_docs)?;
    let val: Option<LinkerData> = validation_docs
        .map(|d| linker_examples(&model, gen, d))
        .transpose()?;
    log::info!(
        "linker: {} training mentions, {} without their entity among the candidates",
        train.mentions,
        train.excluded
    );
    let epochs = train_linker(
        &mut model,
        &train,
        val.as_ref(),
        &config.linker,
        config.seed,
    )?;
    let summary = LinkerSummary {
        mentions: train.mentions,
        excluded: train.excluded,
        epochs,
    };
    model.set_notes(serde_json::to_value(&summary)?);
    Ok((model, summary))
}

fn group_by_doc<T>(items: Vec<T>, doc_id: impl Fn(&T) -> &str) -> HashMap<String, Vec<T>> {
    let mut map: HashMap<String, Vec<T>> = HashMap::new();
    for item in items {
        let id = doc_id(&item).to_string();
        map.entry(id).or_default().push(item);
    }
    map
}

/// Candidate spans of every document, in document order.
pub fn generate_candidates(gen: &CandidateGenerator, docs: &[Document]) -> Vec<SpanCandidates> {
    docs.iter().flat_map(|d| gen.candidates(d)).collect()
}

/// Link candidate spans, keeping `k` entities per span.
pub fn link_candidates(
    model: &ScoringModel,
    table: &AliasTable,
    docs: &[Document],
    candidates: Vec<SpanCandidates>,
    k: usize,
) -> Result<Vec<LinkedSpan>> {
    if model.role() != Role::Linker {
        return Err(Error::Invalid(format!(
            "expected a linker checkpoint, got a {}",
            model.role()
        )));
    }
    let mut by_doc = group_by_doc(candidates, |c| &c.doc_id);
    let mut out = Vec::new();
    for doc in docs {
        if let Some(spans) = by_doc.remove(&doc.doc_id) {
            out.extend(link_spans(model, table, doc, &spans, k)?);
        }
    }
    if let Some(id) = by_doc.keys().next() {
        return Err(Error::Invalid(format!(
            "candidates refer to unknown document {id}"
        )));
    }
    Ok(out)
}

/// Score linked spans with the selector and run inference.
pub fn select_linked(
    model: &ScoringModel,
    table: &AliasTable,
    docs: &[Document],
    linked: &[LinkedSpan],
    mode: InferenceMode,
    threshold: f64,
) -> Result<Vec<Prediction>> {
    if model.role() != Role::Selector {
        return Err(Error::Invalid(format!(
            "expected a selector checkpoint, got a {}",
            model.role()
        )));
    }
    let examples = selector_examples(model, table, docs, selector_samples(linked, &[]))?;
    let scored = score_examples(model, model.params(), &examples)?;
    Ok(infer(&scored, mode, threshold))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub samples: usize,
    pub positives: usize,
    pub positive_weight: f64,
    pub sweep: Vec<SweepRow>,
}

/// Train the selector on linked spans of the training documents. With
/// `sweep` set, every W+ of the grid is tried.
pub fn train_selector_stage(
    linker: &ScoringModel,
    gen: &CandidateGenerator,
    train_docs: &[Document],
    validation_docs: Option<&[Document]>,
    config: &PipelineConfig,
    sweep: bool,
) -> Result<(ScoringModel, SelectorSummary)> {
    let table = gen.table();
    let spec = config.model_spec(Role::Selector);
    let init = ScoringModel::new(spec, linker.vocab().clone(), config.seed.wrapping_add(1))?;
    let prepare = |docs: &[Document]| -> Result<_> {
        let linked = link_candidates(
            linker,
            table,
            docs,
            generate_candidates(gen, docs),
            config.linker.top_k,
        )?;
        let gold = GoldMention::from_documents(docs);
        let samples = selector_samples(&linked, &gold);
        Ok((selector_examples(&init, table, docs, samples)?, gold))
    };
    let (train, _) = prepare(train_docs)?;
    let val = validation_docs.map(prepare).transpose()?;
    let validation = val
        .as_ref()
        .map(|(examples, gold)| Validation { examples, gold });
    let positives = train.iter().filter(|e| e.sample.label).count();
    log::info!("selector: {} samples, {} positive", train.len(), positives);

    let (model, weight, rows) = if sweep {
        sweep_positive_weight(&init, &train, validation, &config.selector, config.seed)?
    } else {
        let mut model = init.clone();
        let w = config.selector.positive_weight;
        let epochs = train_selector(
            &mut model,
            &train,
            validation,
            &config.selector,
            w,
            config.seed,
        )?;
        let top = epochs
            .iter()
            .fold(&epochs[0], |b, e| if e.doc_f1 > b.doc_f1 { e } else { b });
        let row = SweepRow {
            positive_weight: w,
            doc_f1: top.doc_f1,
            mention_f1: top.mention_f1,
            epochs: epochs.clone(),
        };
        (model, w, vec![row])
    };
    let mut model = model;
    let summary = SelectorSummary {
        samples: train.len(),
        positives,
        positive_weight: weight,
        sweep: rows,
    };
    model.set_notes(serde_json::to_value(&summary)?);
    Ok((model, summary))
}

/// Everything produced by one end-to-end run.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub candidates: Vec<SpanCandidates>,
    pub linked: Vec<LinkedSpan>,
    pub predictions: Vec<Prediction>,
    /// `(stage, seconds)`.
    pub timings: Vec<(String, f64)>,
}

pub fn run_all(
    gen: &CandidateGenerator,
    linker: &ScoringModel,
    selector: &ScoringModel,
    docs: &[Document],
    k_l: usize,
    mode: InferenceMode,
    threshold: f64,
) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let t = Instant::now();
    out.candidates = generate_candidates(gen, docs);
    out.timings
        .push(("candgen".into(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    out.linked = link_candidates(linker, gen.table(), docs, out.candidates.clone(), k_l)?;
    out.timings.push(("link".into(), t.elapsed().as_secs_f64()));
    let t = Instant::now();
    out.predictions = select_linked(selector, gen.table(), docs, &out.linked, mode, threshold)?;
    out.timings
        .push(("select".into(), t.elapsed().as_secs_f64()));
    for (stage, secs) in &out.timings {
        log::info!("{stage}: {secs:.3}s");
    }
    Ok(out)
}

/// Predictions as PubTator documents over the preprocessed text.
pub fn predictions_to_pubtator(docs: &[Document], predictions: &[Prediction]) -> Vec<RawDocument> {
    let mut by_doc: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in predictions {
        by_doc.entry(&p.doc_id).or_default().push(p);
    }
    docs.iter()
        .map(|d| {
            // split so that title + " " + body reproduces the text exactly
            let first_end = d
                .sentences
                .first()
                .and_then(|s| s.last())
                .map_or(0, |t| t.end);
            let (title, body) = match d.text[first_end..].find(' ') {
                Some(i) => (
                    d.text[..first_end + i].to_string(),
                    d.text[first_end + i + 1..].to_string(),
                ),
                None => (d.text.clone(), String::new()),
            };
            let mut mentions: Vec<RawMention> = by_doc
                .get(d.doc_id.as_str())
                .into_iter()
                .flatten()
                .map(|p| {
                    let (start, end) = d.span_bytes(p.sentence, p.start, p.end);
                    RawMention {
                        start,
                        end,
                        text: d.text[start..end].to_string(),
                        semantic_type: p.type_id.clone(),
                        entity_id: p.entity_id.clone(),
                    }
                })
                .collect();
            mentions.sort_by(|a, b| {
                (a.start, a.end, &a.entity_id).cmp(&(b.start, b.end, &b.entity_id))
            });
            RawDocument {
                doc_id: d.doc_id.clone(),
                title,
                body,
                mentions,
            }
        })
        .collect()
}

/// Write predictions as JSONL and PubTator under `out`.
pub fn write_predictions(out: &Path, docs: &[Document], predictions: &[Prediction]) -> Result<()> {
    create_dir(out)?;
    io::save_jsonl(&out.join(PREDICTIONS_FILE), predictions)?;
    let raw = predictions_to_pubtator(docs, predictions);
    crate::preprocess::write_pubtator(io::create(&out.join(PREDICTIONS_PUBTATOR_FILE))?, &raw)
}

/// Gold spans with their ranked candidate entities.
pub fn gold_candidate_lists(
    gen: &CandidateGenerator,
    docs: &[Document],
    k: usize,
) -> Vec<RankedCandidates> {
    use rayon::prelude::*;
    docs.par_iter()
        .flat_map_iter(|d| {
            d.mentions.iter().map(move |m| RankedCandidates {
                gold_entity: m.entity_id.clone(),
                ranked: gen
                    .generate_k(d.span_text(m.sentence, m.start, m.end), k)
                    .into_iter()
                    .map(|c| c.entity_id)
                    .collect(),
            })
        })
        .collect()
}

/// Gold mentions surviving candidate generation, linking and selection.
pub fn stage_recall_rows(
    gold: &[GoldMention],
    candidates: &[SpanCandidates],
    linked: &[LinkedSpan],
    predictions: &[Prediction],
) -> Vec<crate::eval::StageRecall> {
    type Key<'a> = (&'a str, usize, usize, usize, &'a str);
    fn key(g: &GoldMention) -> Key<'_> {
        (
            g.doc_id.as_str(),
            g.sentence,
            g.start,
            g.end,
            g.entity_id.as_str(),
        )
    }
    let gold_keys: HashSet<Key<'_>> = gold.iter().map(key).collect();
    let in_candgen: HashSet<Key<'_>> = candidates
        .iter()
        .flat_map(|c| {
            c.matches.iter().map(move |m| {
                (
                    c.doc_id.as_str(),
                    c.sentence,
                    c.start,
                    c.end,
                    m.entity_id.as_str(),
                )
            })
        })
        .filter(|k| gold_keys.contains(k))
        .collect();
    let in_linker: HashSet<Key<'_>> = linked
        .iter()
        .flat_map(|c| {
            c.matches.iter().map(move |m| {
                (
                    c.doc_id.as_str(),
                    c.sentence,
                    c.start,
                    c.end,
                    m.entity_id.as_str(),
                )
            })
        })
        .filter(|k| in_candgen.contains(k))
        .collect();
    let in_selector = predictions
        .iter()
        .map(|p| {
            (
                p.doc_id.as_str(),
                p.sentence,
                p.start,
                p.end,
                p.entity_id.as_str(),
            )
        })
        .filter(|k| in_linker.contains(k))
        .collect::<HashSet<_>>()
        .len();
    stage_recall(
        gold_keys.len(),
        &[
            ("candidate generation", in_candgen.len()),
            ("linker", in_linker.len()),
            ("selector", in_selector),
        ],
    )
}

/// Options for [`evaluate_predictions`].
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Mentions lost in preprocessing, for the raw-corpus lower bound.
    pub dropped: Option<usize>,
    /// Entities of the training gold, for the seen/unseen split.
    pub seen: Option<HashSet<String>>,
    /// Add NER, acronym and false-positive sections.
    pub breakdowns: bool,
}

pub fn evaluate_predictions(
    docs: &[Document],
    predictions: &[Prediction],
    options: &EvalOptions,
) -> EvalReport {
    let gold = GoldMention::from_documents(docs);
    let mut report = EvalReport::default();
    let mention = mention_level_prf(&gold, predictions);
    report.duplicates = mention.duplicates;
    report.push("mention", mention.report);
    report.push("document", document_level_prf(&gold, predictions));
    if let Some(d) = options.dropped {
        report.push(
            "mention (raw lower bound)",
            raw_corpus_lower_bound(&gold, predictions, d),
        );
    }
    if let Some(seen) = &options.seen {
        report.push(
            "mention (seen)",
            subset_prf(&gold, predictions, &Subset::Seen(seen)).report,
        );
        report.push(
            "mention (unseen)",
            subset_prf(&gold, predictions, &Subset::Unseen(seen)).report,
        );
    }
    if options.breakdowns {
        report.push("ner", ner_prf(&gold, predictions).report);
        report.push(
            "acronym",
            subset_prf(&gold, predictions, &Subset::Acronym).report,
        );
        report.errors = Some(error_breakdown(&gold, predictions));
    }
    report
}

/// Entities annotated in the given training documents.
pub fn seen_entities(docs: &[Document]) -> HashSet<String> {
    entity_set(&GoldMention::from_documents(docs))
}

impl PipelineConfig {
    /// Small model and short schedules for CPU-only runs on toy corpora.
    pub fn desk() -> Self {
        Self {
            candgen: CandgenConfig {
                max_span_len: 5,
                max_matches: 10,
                ..CandgenConfig::default()
            },
            encoder: EncoderConfig {
                layers: 1,
                heads: 2,
                hidden: 32,
                ff: 64,
                max_len: 40,
                ..EncoderConfig::default()
            },
            head: HeadConfig {
                hidden1: 64,
                hidden2: 32,
                ..HeadConfig::default()
            },
            linker: LinkerConfig {
                lr: 2e-3,
                epochs: 6,
                ..LinkerConfig::default()
            },
            selector: SelectorConfig {
                lr: 2e-3,
                epochs: 6,
                batch_size: 16,
                ..SelectorConfig::default()
            },
            ..Self::default()
        }
    }
}
