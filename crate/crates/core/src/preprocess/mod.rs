//! Corpus preprocessing: abbreviation expansion, tokenization, sentence
//! splitting, overlap resolution and IOB2 output.

mod abbrev;
mod iob2;
mod pubtator;
mod tokenize;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use abbrev::{
    detect_abbreviations, expand_abbreviations, locate_definition, read_definitions_tsv,
    AbbrevDefinition, ExpansionReport,
};
pub use iob2::{emit_iob2, parse_iob2, Iob2Doc};
pub use pubtator::{read_pubtator, write_pubtator};
pub use tokenize::Tokenizer;

use crate::error::{Error, Result};

/// A document as distributed: title, abstract, and character-anchored mentions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub mentions: Vec<RawMention>,
}

impl RawDocument {
    /// `title + " " + body`, the string mention offsets refer to.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.body)
    }
}

/// Mention anchored by byte offsets into [`RawDocument::text`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMention {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub semantic_type: String,
    pub entity_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offsets into the owning document's text.
    pub start: usize,
    pub end: usize,
}

/// Token span `[start, end)` of one sentence, linked to an entity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
    pub semantic_type: String,
}

impl Mention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Mention) -> bool {
        self.sentence == other.sentence && self.start < other.end && other.start < self.end
    }
}

/// Tokenized, sentence-split document with token-level mentions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<Vec<Token>>,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Tokenize `text` without mentions. Empty text gives zero sentences.
    pub fn from_text(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        tokenizer: &Tokenizer,
    ) -> Self {
        let text = text.into();
        Self {
            doc_id: doc_id.into(),
            sentences: tokenizer.segment(&text),
            text,
            mentions: Vec::new(),
        }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Source text covered by tokens `[start, end)` of `sentence`.
    pub fn span_text(&self, sentence: usize, start: usize, end: usize) -> &str {
        let toks = &self.sentences[sentence];
        &self.text[toks[start].start..toks[end - 1].end]
    }

    /// Byte range of a token span in [`Self::text`].
    pub fn span_bytes(&self, sentence: usize, start: usize, end: usize) -> (usize, usize) {
        let toks = &self.sentences[sentence];
        (toks[start].start, toks[end - 1].end)
    }
}

/// Tokenize and split `text` into sentences.
pub fn segment_and_tokenize(doc_id: &str, text: &str, tokenizer: &Tokenizer) -> Document {
    Document::from_text(doc_id, text, tokenizer)
}

/// Greedy overlap removal preferring longer mentions, then earlier starts,
/// then smaller entity ids. Returns the kept mentions in document order and
/// the number dropped.
pub fn resolve_overlapping_mentions(mut mentions: Vec<Mention>) -> (Vec<Mention>, usize) {
    mentions.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(a.sentence.cmp(&b.sentence))
            .then(a.start.cmp(&b.start))
            .then_with(|| a.entity_id.cmp(&b.entity_id))
            .then_with(|| a.semantic_type.cmp(&b.semantic_type))
    });
    let mut kept: Vec<Mention> = Vec::with_capacity(mentions.len());
    let mut dropped = 0;
    for m in mentions {
        if kept.iter().any(|k| k.overlaps(&m)) {
            dropped += 1;
        } else {
            kept.push(m);
        }
    }
    kept.sort();
    (kept, dropped)
}

pub(crate) fn check_non_overlapping(doc: &Document) -> Result<()> {
    let mut by_sentence: HashMap<usize, Vec<&Mention>> = HashMap::new();
    for m in &doc.mentions {
        by_sentence.entry(m.sentence).or_default().push(m);
    }
    for (sentence, mut ms) in by_sentence {
        ms.sort_by_key(|m| (m.start, m.end));
        if ms.windows(2).any(|w| w[0].end > w[1].start) {
            return Err(Error::OverlappingMentions {
                doc_id: doc.doc_id.clone(),
                sentence,
            });
        }
    }
    Ok(())
}

/// Per-document mention accounting through preprocessing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocReport {
    pub doc_id: String,
    pub raw_mentions: usize,
    pub definitions: usize,
    pub dropped_abbreviation: usize,
    pub dropped_unaligned: usize,
    pub dropped_overlap: usize,
    pub mentions: usize,
}

impl DocReport {
    pub fn dropped(&self) -> usize {
        self.raw_mentions - self.mentions
    }
}

/// How abbreviation definitions are obtained for a document.
#[derive(Clone, Copy, Debug)]
pub enum Abbreviations<'a> {
    Detect,
    /// `(short, long)` pairs from an external definitions file.
    Given(&'a [(String, String)]),
    Skip,
}

/// Full per-document pipeline: expand abbreviations, tokenize with mention
/// boundaries as forced token boundaries, align mentions to tokens and
/// resolve overlaps.
pub fn preprocess_document(
    raw: &RawDocument,
    abbreviations: Abbreviations<'_>,
    tokenizer: &Tokenizer,
) -> (Document, DocReport) {
    let text = raw.text();
    let defs = match abbreviations {
        Abbreviations::Detect => detect_abbreviations(&text),
        Abbreviations::Given(pairs) => {
            let mut defs: Vec<AbbrevDefinition> = pairs
                .iter()
                .filter_map(|(s, l)| locate_definition(&text, s, l))
                .collect();
            defs.sort_by_key(|d| d.offset);
            defs
        }
        Abbreviations::Skip => Vec::new(),
    };
    let (expanded, expansion) = expand_abbreviations(raw, &defs);
    let text = expanded.text();

    let mut report = DocReport {
        doc_id: raw.doc_id.clone(),
        raw_mentions: raw.mentions.len(),
        definitions: expansion.definitions,
        dropped_abbreviation: expansion.dropped_mentions + expansion.broken_mentions,
        ..Default::default()
    };

    // trim whitespace off mention edges before using them as boundaries
    let spans: Vec<(usize, usize, &RawMention)> = expanded
        .mentions
        .iter()
        .map(|m| {
            let s = &text[m.start..m.end];
            let lead = s.len() - s.trim_start().len();
            let trail = s.len() - s.trim_end().len();
            (
                m.start + lead,
                m.end.saturating_sub(trail).max(m.start + lead),
                m,
            )
        })
        .collect();
    let boundaries: Vec<usize> = spans.iter().flat_map(|&(s, e, _)| [s, e]).collect();
    let no_break: Vec<(usize, usize)> = spans.iter().map(|&(s, e, _)| (s, e)).collect();
    let sentences = tokenizer.segment_with(&text, &boundaries, &no_break);

    let mut starts: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut ends: HashMap<usize, (usize, usize)> = HashMap::new();
    for (si, sent) in sentences.iter().enumerate() {
        for (ti, tok) in sent.iter().enumerate() {
            starts.insert(tok.start, (si, ti));
            ends.insert(tok.end, (si, ti + 1));
        }
    }
    let mut mentions = Vec::new();
    for (s, e, m) in spans {
        match (starts.get(&s), ends.get(&e)) {
            (Some(&(ss, ts)), Some(&(se, te))) if ss == se && ts < te => mentions.push(Mention {
                sentence: ss,
                start: ts,
                end: te,
                entity_id: m.entity_id.clone(),
                semantic_type: m.semantic_type.clone(),
            }),
            _ => report.dropped_unaligned += 1,
        }
    }
    let (mentions, dropped) = resolve_overlapping_mentions(mentions);
    report.dropped_overlap = dropped;
    report.mentions = mentions.len();

    let doc = Document {
        doc_id: raw.doc_id.clone(),
        text,
        sentences,
        mentions,
    };
    (doc, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(start: usize, end: usize, entity: &str) -> Mention {
        Mention {
            sentence: 0,
            start,
            end,
            entity_id: entity.into(),
            semantic_type: "T1".into(),
        }
    }

    #[test]
    fn longer_mention_wins() {
        let (kept, dropped) = resolve_overlapping_mentions(vec![m(0, 5, "C1"), m(2, 8, "C2")]);
        assert_eq!(kept, vec![m(2, 8, "C2")]);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn ties_broken_by_entity_id() {
        let (kept, _) = resolve_overlapping_mentions(vec![m(0, 3, "C9"), m(0, 3, "C1")]);
        assert_eq!(kept, vec![m(0, 3, "C1")]);
        // equal length: earlier start wins
        let (kept, _) = resolve_overlapping_mentions(vec![m(1, 3, "C1"), m(0, 2, "C2")]);
        assert_eq!(kept, vec![m(0, 2, "C2")]);
    }

    #[test]
    fn disjoint_unchanged() {
        let input = vec![m(0, 1, "C1"), m(1, 3, "C2"), m(5, 6, "C3")];
        let (kept, dropped) = resolve_overlapping_mentions(input.clone());
        assert_eq!(kept, input);
        assert_eq!(dropped, 0);
    }

    #[test]
    fn different_sentences_never_overlap() {
        let mut other = m(0, 5, "C2");
        other.sentence = 1;
        let (kept, _) = resolve_overlapping_mentions(vec![m(0, 5, "C1"), other]);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn full_document_pipeline() {
        let body = "Escherichia coli (E. coli) causes disease. Later E. coli spreads.";
        let title = "E. coli report".to_string();
        let text = format!("{title} {body}");
        let find = |needle: &str, from: usize| from + text[from..].find(needle).unwrap();
        let a = find("Escherichia coli", 0);
        let b = find("E. coli)", a);
        let c = find("E. coli", b + 8);
        let mention = |s: usize, len: usize| RawMention {
            start: s,
            end: s + len,
            text: text[s..s + len].to_string(),
            semantic_type: "T007".into(),
            entity_id: "C0014834".into(),
        };
        let raw = RawDocument {
            doc_id: "42".into(),
            title,
            body: body.into(),
            mentions: vec![mention(0, 7), mention(a, 16), mention(b, 7), mention(c, 7)],
        };
        let (doc, report) = preprocess_document(&raw, Abbreviations::Detect, &Tokenizer::default());
        assert_eq!(report.definitions, 1);
        assert_eq!(report.dropped_abbreviation, 1);
        assert_eq!(report.mentions, 3);
        assert_eq!(report.dropped(), 1);
        assert!(doc.text.contains("Later Escherichia coli spreads"));
        for mention in &doc.mentions {
            assert_eq!(
                doc.span_text(mention.sentence, mention.start, mention.end),
                "Escherichia coli"
            );
        }
        // the title mention was expanded too
        assert!(doc.text.starts_with("Escherichia coli report"));
        assert_eq!(doc.sentences.len(), 2);
    }

    #[test]
    fn sentence_break_suppressed_inside_mention() {
        let text = "Take vitamin B. Twelve doses.";
        let s = text.find("vitamin").unwrap();
        let e = text.find("Twelve").unwrap() + 6;
        let raw = RawDocument {
            doc_id: "1".into(),
            title: "Take".into(),
            body: text[5..].into(),
            mentions: vec![RawMention {
                start: s,
                end: e,
                text: text[s..e].into(),
                semantic_type: "T1".into(),
                entity_id: "C1".into(),
            }],
        };
        let tok = Tokenizer::with_protected(Vec::<String>::new());
        let (doc, report) = preprocess_document(&raw, Abbreviations::Skip, &tok);
        assert_eq!(report.mentions, 1);
        let mm = &doc.mentions[0];
        assert_eq!(
            doc.span_text(mm.sentence, mm.start, mm.end),
            "vitamin B. Twelve"
        );
    }
}
