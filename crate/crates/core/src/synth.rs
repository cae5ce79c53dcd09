//! Seeded synthetic ontologies and corpora for tests, benchmarks and demos.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kb::{
    build_alias_table, AliasTable, BuildReport, NameCleaner, NameType, OntologyRecord,
    TypeHierarchy,
};
use crate::preprocess::{RawDocument, RawMention};

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl",
    "dr", "gr", "pl", "st", "tr", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "io", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "x", "m", "th"];

const TYPES: &[(&str, &str, &[&str])] = &[
    (
        "T001",
        "Disorder",
        &["syndrome", "disease", "fibrosis", "deficiency", "lesion"],
    ),
    (
        "T002",
        "Chemical",
        &["acid", "oxide", "kinase", "inhibitor", "ester"],
    ),
    (
        "T003",
        "Organism",
        &["virus", "bacterium", "fungus", "parasite", "strain"],
    ),
    (
        "T004",
        "Anatomy",
        &["gland", "duct", "membrane", "nerve", "tissue"],
    ),
    (
        "T005",
        "Procedure",
        &["therapy", "resection", "assay", "screening", "imaging"],
    ),
];

const FILLERS: &[&str] = &[
    "patients",
    "cohort",
    "samples",
    "levels",
    "response",
    "analysis",
    "controls",
    "subjects",
    "expression",
    "outcome",
    "increased",
    "reduced",
    "measured",
    "observed",
    "compared",
    "associated",
    "significant",
    "clinical",
    "baseline",
    "severe",
    "weekly",
    "treated",
    "cases",
    "results",
];

const TEMPLATES: &[&str] = &[
    "Patients with {} showed increased levels",
    "We observed {} in treated subjects",
    "The {} cohort was compared with controls",
    "Expression of {} was reduced after {}",
    "Clinical outcome was associated with {} and {}",
    "Severe {} was measured at baseline",
    "Results suggest that {} affects response",
    "Cases of {} were linked to {}",
];

/// Pronounceable nonsense word of two or three syllables.
pub fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for i in 0..syllables {
        w.push_str(ONSETS.choose(rng).expect("non-empty"));
        w.push_str(VOWELS.choose(rng).expect("non-empty"));
        if i + 1 == syllables {
            w.push_str(CODAS.choose(rng).expect("non-empty"));
        }
    }
    w
}

fn unique_word<R: Rng>(rng: &mut R, used: &mut HashSet<String>) -> String {
    loop {
        let w = pseudo_word(rng);
        if used.insert(w.clone()) {
            return w;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub concepts: usize,
    pub docs: usize,
    pub sentences_per_doc: (usize, usize),
    /// Chance that a concept gets a synonym next to its primary name and
    /// acronym.
    pub synonym_rate: f64,
    /// Chance that a subtype edge is used instead of the selected type.
    pub subtype_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            concepts: 200,
            docs: 50,
            sentences_per_doc: (3, 6),
            synonym_rate: 0.5,
            subtype_rate: 0.3,
            seed: 0,
        }
    }
}

/// One concept of the synthetic ontology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConcept {
    pub entity_id: String,
    /// Selected semantic type id.
    pub type_id: String,
    /// Type id written to the ontology file; may be a subtype.
    pub raw_type_id: String,
    pub primary: String,
    pub synonym: Option<String>,
    pub acronym: String,
}

impl SynthConcept {
    pub fn aliases(&self) -> Vec<(&str, NameType)> {
        let mut out = vec![(self.primary.as_str(), NameType::PrimaryName)];
        out.push((self.acronym.as_str(), NameType::Acronym));
        if let Some(s) = &self.synonym {
            out.push((s.as_str(), NameType::Synonym));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOntology {
    pub concepts: Vec<SynthConcept>,
    /// `(child, parent)` type edges.
    pub edges: Vec<(String, String)>,
    /// `(type id, name)` of the selected types.
    pub selected: Vec<(String, String)>,
}

impl SynthOntology {
    pub fn generate(config: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::generate_with(config, 0, &mut rng, &mut HashSet::new())
    }

    fn generate_with(
        config: &SynthConfig,
        first_id: usize,
        rng: &mut ChaCha8Rng,
        used: &mut HashSet<String>,
    ) -> Self {
        let selected: Vec<(String, String)> = TYPES
            .iter()
            .map(|(id, n, _)| (id.to_string(), n.to_string()))
            .collect();
        let edges: Vec<(String, String)> = TYPES
            .iter()
            .map(|(id, _, _)| (format!("{id}.1"), id.to_string()))
            .collect();
        let mut acronyms: HashSet<String> = used
            .iter()
            .filter(|w| w.chars().all(|c| c.is_ascii_uppercase()))
            .cloned()
            .collect();
        let mut concepts = Vec::with_capacity(config.concepts);
        for i in 0..config.concepts {
            let (type_id, _, heads) = TYPES[i % TYPES.len()];
            let raw_type_id = if rng.gen_bool(config.subtype_rate) {
                format!("{type_id}.1")
            } else {
                type_id.to_string()
            };
            let stem = unique_word(rng, used);
            let head = *heads.choose(rng).expect("non-empty");
            let primary = format!("{stem} {head}");
            let synonym = rng.gen_bool(config.synonym_rate).then(|| {
                let modifier = unique_word(rng, used);
                format!("{modifier} {stem}")
            });
            let acronym = loop {
                let len = rng.gen_range(3..=4);
                let a: String = (0..len)
                    .map(|_| rng.gen_range(b'A'..=b'Z') as char)
                    .collect();
                if acronyms.insert(a.clone()) {
                    used.insert(a.clone());
                    break a;
                }
            };
            concepts.push(SynthConcept {
                entity_id: format!("C{:06}", first_id + i),
                type_id: type_id.to_string(),
                raw_type_id,
                primary,
                synonym,
                acronym,
            });
        }
        Self {
            concepts,
            edges,
            selected,
        }
    }

    /// This ontology plus `extra` new concepts that share no names with it.
    pub fn extended(&self, extra: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used: HashSet<String> = HashSet::new();
        for c in &self.concepts {
            used.extend(c.primary.split(' ').map(String::from));
            if let Some(s) = &c.synonym {
                used.extend(s.split(' ').map(String::from));
            }
            used.insert(c.acronym.clone());
        }
        let config = SynthConfig {
            concepts: extra,
            ..SynthConfig::default()
        };
        let more = Self::generate_with(&config, self.concepts.len(), &mut rng, &mut used);
        let mut out = self.clone();
        out.concepts.extend(more.concepts);
        out
    }

    pub fn records(&self) -> Vec<OntologyRecord> {
        self.concepts
            .iter()
            .flat_map(|c| {
                c.aliases().into_iter().map(|(name, nt)| OntologyRecord {
                    entity_id: c.entity_id.clone(),
                    type_id: c.raw_type_id.clone(),
                    name: name.to_string(),
                    name_type_tag: nt.tag().to_string(),
                })
            })
            .collect()
    }

    pub fn hierarchy(&self) -> Result<TypeHierarchy> {
        TypeHierarchy::new(self.edges.clone(), self.selected.clone())
    }

    pub fn alias_table(&self) -> Result<(AliasTable, BuildReport)> {
        build_alias_table(
            self.records().into_iter().map(Ok),
            &self.hierarchy()?,
            &NameCleaner::default(),
        )
    }

    /// Write `ontology.tsv`, `hierarchy.tsv` and `types.tsv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut ontology = String::new();
        for r in self.records() {
            ontology.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.entity_id, r.type_id, r.name, r.name_type_tag
            ));
        }
        let hierarchy: String = self
            .edges
            .iter()
            .map(|(c, p)| format!("{c}\t{p}\n"))
            .collect();
        let types: String = self
            .selected
            .iter()
            .map(|(id, n)| format!("{id}\t{n}\n"))
            .collect();
        for (name, body) in [
            ("ontology.tsv", ontology),
            ("hierarchy.tsv", hierarchy),
            ("types.tsv", types),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Documents whose mentions are verbatim aliases of `ontology` concepts.
pub fn synth_corpus(ontology: &SynthOntology, config: &SynthConfig) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_c0de);
    (0..config.docs)
        .map(|d| {
            let mut doc = RawDocument {
                doc_id: format!("{}", 10_000 + d),
                title: String::new(),
                body: String::new(),
                mentions: Vec::new(),
            };
            let mut text = String::new();
            let (lo, hi) = config.sentences_per_doc;
            let sentences = rng.gen_range(lo..=hi.max(lo));
            for s in 0..=sentences {
                if s == 1 {
                    doc.title = std::mem::take(&mut text);
                    text.clear();
                } else if s > 1 {
                    text.push(' ');
                }
                let base = if s == 0 { 0 } else { doc.title.len() + 1 };
                let template = if s == 0 {
                    "Study of {} in {}"
                } else {
                    *TEMPLATES.choose(&mut rng).expect("non-empty")
                };
                let parts: Vec<&str> = template.split("{}").collect();
                for (i, part) in parts.iter().enumerate() {
                    text.push_str(part);
                    if i + 1 == parts.len() {
                        break;
                    }
                    if s == 0 && i == 1 {
                        text.push_str(FILLERS.choose(&mut rng).expect("non-empty"));
                        continue;
                    }
                    let c = ontology
                        .concepts
                        .choose(&mut rng)
                        .expect("ontology is not empty");
                    let aliases = c.aliases();
                    let (alias, _) = aliases.choose(&mut rng).expect("every concept has a name");
                    let start = base + text.len();
                    text.push_str(alias);
                    doc.mentions.push(RawMention {
                        start,
                        end: start + alias.len(),
                        text: alias.to_string(),
                        semantic_type: c.type_id.clone(),
                        entity_id: c.entity_id.clone(),
                    });
                }
                text.push('.');
            }
            doc.body = text;
            doc
        })
        .collect()
}

/// `n` distinct alias names of one to four words, with entity ids that give
/// most entities one to four names.
pub fn synth_alias_names(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon: Vec<String> = {
        let mut used = HashSet::new();
        (0..(n / 3).max(16))
            .map(|_| unique_word(&mut rng, &mut used))
            .collect()
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut entity = 0usize;
    while out.len() < n {
        let words = rng.gen_range(1..=4);
        let name: Vec<&str> = (0..words)
            .map(|_| lexicon.choose(&mut rng).expect("non-empty").as_str())
            .collect();
        let name = name.join(" ");
        if seen.insert(name.clone()) {
            if rng.gen_bool(0.4) {
                entity += 1;
            }
            out.push((name, format!("E{entity}")));
        }
    }
    out
}

/// A random sentence mixing pseudo-words, filler words, stop words and
/// punctuation.
pub fn random_sentence<R: Rng>(rng: &mut R, tokens: usize) -> String {
    const STOPS: &[&str] = &[
        "the", "of", "and", "in", "with", "was", "to", "a", "for", "by",
    ];
    const PUNCT: &[&str] = &[",", "(", ")", ";", ":", "-", "/"];
    let mut out = Vec::with_capacity(tokens);
    for _ in 0..tokens {
        let w = match rng.gen_range(0..10) {
            0..=3 => pseudo_word(rng),
            4..=5 => FILLERS.choose(rng).expect("non-empty").to_string(),
            6..=7 => STOPS.choose(rng).expect("non-empty").to_string(),
            _ => PUNCT.choose(rng).expect("non-empty").to_string(),
        };
        out.push(w);
    }
    out.join(" ") + "."
}

/// Write a corpus as PubTator.
pub fn write_corpus(path: &Path, docs: &[RawDocument]) -> Result<()> {
    crate::preprocess::write_pubtator(io::create(path)?, docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{preprocess_document, Abbreviations, Tokenizer};

    #[test]
    fn ontology_shape() {
        let o = SynthOntology::generate(&SynthConfig::default());
        assert_eq!(o.concepts.len(), 200);
        let types: HashSet<&str> = o.concepts.iter().map(|c| c.type_id.as_str()).collect();
        assert_eq!(types.len(), 5);
        let acronyms: HashSet<&str> = o.concepts.iter().map(|c| c.acronym.as_str()).collect();
        assert_eq!(acronyms.len(), 200);
        for c in &o.concepts {
            let n = c.aliases().len();
            assert!((2..=3).contains(&n));
        }
        let (table, report) = o.alias_table().unwrap();
        assert_eq!(report.discarded(), 0);
        assert_eq!(table.entity_count(), 200);
        assert_eq!(table.count_by_name_type(NameType::Acronym), 200);
        assert_eq!(SynthOntology::generate(&SynthConfig::default()), o);
    }

    #[test]
    fn extension_is_a_superset() {
        let o = SynthOntology::generate(&SynthConfig::default());
        let big = o.extended(50, 1);
        assert_eq!(big.concepts.len(), 250);
        assert_eq!(&big.concepts[..200], &o.concepts[..]);
        let (table, _) = big.alias_table().unwrap();
        assert_eq!(table.entity_count(), 250);
    }

    #[test]
    fn corpus_mentions_survive_preprocessing() {
        let config = SynthConfig::default();
        let o = SynthOntology::generate(&config);
        let docs = synth_corpus(&o, &config);
        assert_eq!(docs.len(), 50);
        let tok = Tokenizer::default();
        for raw in &docs {
            let text = raw.text();
            for m in &raw.mentions {
                assert_eq!(&text[m.start..m.end], m.text);
            }
            let (doc, report) = preprocess_document(raw, Abbreviations::Detect, &tok);
            assert_eq!(report.dropped(), 0, "{:?}", report);
            assert_eq!(doc.mentions.len(), raw.mentions.len());
        }
    }

    #[test]
    fn alias_names_are_distinct() {
        let names = synth_alias_names(2000, 3);
        let set: HashSet<&str> = names.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(set.len(), 2000);
        assert_eq!(synth_alias_names(2000, 3), names);
    }
}
