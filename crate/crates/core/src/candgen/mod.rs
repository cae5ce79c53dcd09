//! Candidate spans and lexical entity retrieval.

mod index;
mod spans;
mod tfidf;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use index::{combine, lexical_similarity, AliasIndex, IndexParams, QueryVec, Vectorizers};
pub use spans::{enumerate_candidate_spans, CandidateSpan, StopList};
pub use tfidf::{Lemmatizer, NgramMode, SparseVec, TfidfVectorizer};

use crate::error::{Error, Result};
use crate::kb::{AliasTable, NameType};
use crate::preprocess::Document;

/// How scored aliases are ranked before per-entity deduplication.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    /// Best name type first, then score descending.
    #[default]
    NameTypeFirst,
    /// Score descending, name type breaking ties.
    ScoreFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandgenConfig {
    /// K_S: longest span in tokens.
    pub max_span_len: usize,
    /// K_M: matches kept per span.
    pub max_matches: usize,
    /// K_W: weight of the word cosine.
    pub word_weight: f64,
    pub order: MatchOrder,
    pub index: IndexParams,
    /// Replaces the built-in stop list when set.
    pub stop_words: Option<Vec<String>>,
}

impl Default for CandgenConfig {
    fn default() -> Self {
        Self {
            max_span_len: 10,
            max_matches: 50,
            word_weight: 0.5,
            order: MatchOrder::NameTypeFirst,
            index: IndexParams::default(),
            stop_words: None,
        }
    }
}

impl CandgenConfig {
    pub fn stop_list(&self) -> StopList {
        match &self.stop_words {
            Some(words) => StopList::new(words),
            None => StopList::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalMatch {
    pub entity_id: String,
    pub alias: String,
    pub name_type: NameType,
    pub type_id: String,
    pub score: f64,
}

/// One JSONL record of candidate output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanCandidates {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub matches: Vec<LexicalMatch>,
}

impl SpanCandidates {
    pub fn span(&self) -> CandidateSpan {
        CandidateSpan {
            doc_id: self.doc_id.clone(),
            sentence: self.sentence,
            start: self.start,
            end: self.end,
            text: self.text.clone(),
        }
    }
}

/// Sort scored aliases, keep the first entry per entity, truncate to `k`.
/// Ties go to the lower alias index.
pub fn rank_matches(
    table: &AliasTable,
    mut scored: Vec<(u32, f64)>,
    order: MatchOrder,
    k: usize,
) -> Vec<LexicalMatch> {
    let entries = table.entries();
    let cmp = |a: &(u32, f64), b: &(u32, f64)| -> Ordering {
        let ra = entries[a.0 as usize].name_type.rank();
        let rb = entries[b.0 as usize].name_type.rank();
        let by_score = b.1.total_cmp(&a.1);
        match order {
            MatchOrder::NameTypeFirst => ra.cmp(&rb).then(by_score),
            MatchOrder::ScoreFirst => by_score.then(ra.cmp(&rb)),
        }
        .then(a.0.cmp(&b.0))
    };
    let dedup = |sorted: &[(u32, f64)]| {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(k);
        for &(i, score) in sorted {
            if out.len() == k {
                break;
            }
            let e = &entries[i as usize];
            if seen.insert(e.entity_id.as_str()) {
                out.push(LexicalMatch {
                    entity_id: e.entity_id.clone(),
                    alias: e.name.clone(),
                    name_type: e.name_type,
                    type_id: e.semantic_type.id.clone(),
                    score,
                });
            }
        }
        out
    };
    if k == 0 {
        return Vec::new();
    }
    // Try a partial selection first; fall back to a full sort when the head
    // holds too few distinct entities.
    let head = 8 * k;
    if scored.len() > head {
        scored.select_nth_unstable_by(head, cmp);
        let (top, _) = scored.split_at_mut(head);
        top.sort_unstable_by(cmp);
        let out = dedup(top);
        if out.len() == k {
            return out;
        }
    }
    scored.sort_unstable_by(cmp);
    dedup(&scored)
}

/// Alias table plus its index: retrieval of the top-K_M entities for a span.
#[derive(Clone, Debug)]
pub struct CandidateGenerator {
    table: AliasTable,
    index: AliasIndex,
    config: CandgenConfig,
    stop: StopList,
}

impl CandidateGenerator {
    /// Fit vectorizers and index every alias of `table`.
    pub fn build(table: AliasTable, config: CandgenConfig) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyAliasTable(
                "cannot index an empty alias table".into(),
            ));
        }
        let names: Vec<&str> = table.entries().iter().map(|e| e.name.as_str()).collect();
        let index = AliasIndex::build(&names, &config.index)?;
        Self::from_parts(table, index, config)
    }

    pub fn from_parts(table: AliasTable, index: AliasIndex, config: CandgenConfig) -> Result<Self> {
        if index.len() != table.len() {
            return Err(Error::Invalid(format!(
                "index covers {} aliases but the table has {}",
                index.len(),
                table.len()
            )));
        }
        let stop = config.stop_list();
        Ok(Self {
            table,
            index,
            config,
            stop,
        })
    }

    pub fn table(&self) -> &AliasTable {
        &self.table
    }

    pub fn index(&self) -> &AliasIndex {
        &self.index
    }

    pub fn config(&self) -> &CandgenConfig {
        &self.config
    }

    pub fn stop_list(&self) -> &StopList {
        &self.stop
    }

    pub fn generate(&self, text: &str) -> Vec<LexicalMatch> {
        self.generate_k(text, self.config.max_matches)
    }

    pub fn generate_k(&self, text: &str, k: usize) -> Vec<LexicalMatch> {
        let q = self.index.vectorize(text);
        let scored = self.index.scores(&q, self.config.word_weight);
        rank_matches(&self.table, scored, self.config.order, k)
    }

    /// Same ranking over brute-force scores.
    pub fn generate_brute_force(&self, text: &str, k: usize) -> Vec<LexicalMatch> {
        let q = self.index.vectorize(text);
        let scored = self.index.brute_force_scores(&q, self.config.word_weight);
        rank_matches(&self.table, scored, self.config.order, k)
    }

    pub fn spans(&self, doc: &Document) -> Vec<CandidateSpan> {
        enumerate_candidate_spans(doc, self.config.max_span_len, &self.stop)
    }

    /// Enumerate spans and retrieve matches for each. Spans without any
    /// match are kept with an empty list.
    pub fn candidates(&self, doc: &Document) -> Vec<SpanCandidates> {
        self.spans(doc)
            .into_par_iter()
            .map(|s| SpanCandidates {
                matches: self.generate(&s.text),
                doc_id: s.doc_id,
                sentence: s.sentence,
                start: s.start,
                end: s.end,
                text: s.text,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{AliasEntry, SemanticType};

    fn entry(name: &str, entity: &str, nt: NameType) -> AliasEntry {
        AliasEntry {
            name: name.into(),
            entity_id: entity.into(),
            semantic_type: SemanticType {
                id: "T1".into(),
                name: "Thing".into(),
            },
            name_type: nt,
            qualifier: None,
        }
    }

    #[test]
    fn priority_versus_score() {
        // X: synonym matches exactly, primary only partially.
        let table = AliasTable::from_entries(vec![
            entry("myocardial infarction", "X", NameType::PrimaryName),
            entry("heart attack", "X", NameType::Synonym),
            entry("heart", "Y", NameType::PrimaryName),
        ])
        .unwrap();
        let gen = CandidateGenerator::build(table.clone(), CandgenConfig::default()).unwrap();
        let out = gen.generate("heart attack");
        let ids: Vec<&str> = out.iter().map(|m| m.entity_id.as_str()).collect();
        assert_eq!(ids, vec!["Y", "X"]);
        // X survives once, through its weaker-scoring primary name
        assert_eq!(out.iter().filter(|m| m.entity_id == "X").count(), 1);
        assert_eq!(out[1].alias, "myocardial infarction");
        assert!(out[1].score < 0.5);

        let cfg = CandgenConfig {
            order: MatchOrder::ScoreFirst,
            ..CandgenConfig::default()
        };
        let gen = CandidateGenerator::build(table, cfg).unwrap();
        let out = gen.generate("heart attack");
        assert_eq!(out[0].entity_id, "X");
        assert_eq!(out[0].alias, "heart attack");
        assert!((out[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_match_per_entity_and_k_limit() {
        let table = AliasTable::from_entries(vec![
            entry("heart attack", "X", NameType::PrimaryName),
            entry("heart attacks", "X", NameType::Synonym),
            entry("heart", "Y", NameType::PrimaryName),
            entry("heart failure", "Z", NameType::PrimaryName),
        ])
        .unwrap();
        let gen = CandidateGenerator::build(table, CandgenConfig::default()).unwrap();
        let out = gen.generate_k("heart attack", 2);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].entity_id, "X");
        assert_eq!(out[0].name_type, NameType::PrimaryName);
        assert!(gen.generate("zzz").is_empty());
    }

    #[test]
    fn mismatched_index_rejected() {
        let table =
            AliasTable::from_entries(vec![entry("heart", "Y", NameType::PrimaryName)]).unwrap();
        let index = AliasIndex::build(&["a", "b"], &IndexParams::default()).unwrap();
        assert!(CandidateGenerator::from_parts(table, index, CandgenConfig::default()).is_err());
    }

    #[test]
    fn record_serializes_flat() {
        let rec = SpanCandidates {
            doc_id: "d".into(),
            sentence: 0,
            start: 1,
            end: 2,
            text: "flu".into(),
            matches: vec![LexicalMatch {
                entity_id: "C1".into(),
                alias: "flu".into(),
                name_type: NameType::Acronym,
                type_id: "T047".into(),
                score: 1.0,
            }],
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.starts_with(r#"{"doc_id":"d","sentence":0,"start":1,"end":2,"text":"flu","matches":[{"entity_id":"C1""#));
        let back: SpanCandidates = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
    }
}
