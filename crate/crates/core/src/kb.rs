//! Entity knowledge base: the flattened alias table built from an ontology dump.
//!
//! Input is a neutral TSV (`entity_id TAB type_id TAB name TAB name_type_tag`)
//! plus a type hierarchy (`child TAB parent`) and the list of selected semantic
//! types (`type_id TAB display name`). Names are cleaned, concepts are mapped to
//! their nearest selected ancestor type, and every entry is tagged with a
//! [`NameType`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::text::normalize_whitespace;

/// Authority of an alias, best first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NameType {
    PrimaryName = 0,
    PrimaryNameDisambiguated = 1,
    Acronym = 2,
    Synonym = 3,
}

impl NameType {
    pub const ALL: [NameType; 4] = [
        NameType::PrimaryName,
        NameType::PrimaryNameDisambiguated,
        NameType::Acronym,
        NameType::Synonym,
    ];

    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn is_primary(self) -> bool {
        matches!(
            self,
            NameType::PrimaryName | NameType::PrimaryNameDisambiguated
        )
    }

    /// Ontology TSV tag: `P`, `PD`, `A` or `S`.
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "P" => Some(NameType::PrimaryName),
            "PD" => Some(NameType::PrimaryNameDisambiguated),
            "A" => Some(NameType::Acronym),
            "S" => Some(NameType::Synonym),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            NameType::PrimaryName => "P",
            NameType::PrimaryNameDisambiguated => "PD",
            NameType::Acronym => "A",
            NameType::Synonym => "S",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticType {
    pub id: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub name: String,
    pub entity_id: String,
    pub semantic_type: SemanticType,
    pub name_type: NameType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanRejection {
    EmptyAfterCleaning,
}

/// Strips meta-information markers and trailing disambiguating qualifiers
/// from raw ontology names.
#[derive(Clone, Debug)]
pub struct NameCleaner {
    meta_tokens: Vec<String>,
}

impl Default for NameCleaner {
    fn default() -> Self {
        Self::new(["Formally", "Not Otherwise Specified", "NOS"])
    }
}

impl NameCleaner {
    pub fn new<I, S>(meta_tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut meta_tokens: Vec<String> = meta_tokens.into_iter().map(Into::into).collect();
        // longest first so "Not Otherwise Specified" wins over any sub-phrase
        meta_tokens.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Self { meta_tokens }
    }

    /// Returns the cleaned name and the qualifier removed from its tail.
    pub fn clean(
        &self,
        raw: &str,
    ) -> std::result::Result<(String, Option<String>), CleanRejection> {
        let (mut name, qualifier) = split_qualifier(raw.trim());
        for token in &self.meta_tokens {
            name = remove_phrase(&name, token);
        }
        let name = tidy_separators(&normalize_whitespace(&name));
        if name.is_empty() {
            return Err(CleanRejection::EmptyAfterCleaning);
        }
        Ok((name, qualifier))
    }
}

fn split_qualifier(raw: &str) -> (String, Option<String>) {
    for (open, close) in [('<', '>'), ('⟨', '⟩')] {
        if let Some(body) = raw.strip_suffix(close) {
            if let Some(pos) = body.rfind(open) {
                let qualifier = normalize_whitespace(&body[pos + open.len_utf8()..]);
                let name = body[..pos].to_string();
                let qualifier = (!qualifier.is_empty()).then_some(qualifier);
                return (name, qualifier);
            }
        }
    }
    (raw.to_string(), None)
}

/// Remove whole-word occurrences of `phrase`.
fn remove_phrase(text: &str, phrase: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (pos, m) in text.match_indices(phrase) {
        let before = text[..pos].chars().next_back();
        let after = text[pos + m.len()..].chars().next();
        if before.is_some_and(char::is_alphanumeric) || after.is_some_and(char::is_alphanumeric) {
            continue;
        }
        out.push_str(&text[last..pos]);
        out.push(' ');
        last = pos + m.len();
    }
    out.push_str(&text[last..]);
    out
}

/// Drop separators left dangling by phrase removal: `"Headache , "` -> `"Headache"`.
fn tidy_separators(text: &str) -> String {
    let mut s = text.replace("()", "").replace("[]", "").replace(" ,", ",");
    s = normalize_whitespace(&s);
    let junk: &[char] = &[',', ';', ':', '-', ' '];
    s.trim_matches(junk).to_string()
}

/// Child -> parent edges between semantic types, plus the selected target set.
#[derive(Clone, Debug, Default)]
pub struct TypeHierarchy {
    parents: BTreeMap<String, String>,
    selected: BTreeMap<String, String>,
}

impl TypeHierarchy {
    /// `selected` maps type id to display name. Rejects cyclic edge sets.
    pub fn new(
        edges: impl IntoIterator<Item = (String, String)>,
        selected: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let h = Self {
            parents: edges.into_iter().collect(),
            selected: selected.into_iter().collect(),
        };
        h.check_acyclic()?;
        Ok(h)
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut done: HashSet<&str> = HashSet::new();
        for start in self.parents.keys() {
            let mut path: HashSet<&str> = HashSet::new();
            let mut cur = start.as_str();
            loop {
                if done.contains(cur) {
                    break;
                }
                if !path.insert(cur) {
                    return Err(Error::HierarchyCycle(cur.to_string()));
                }
                match self.parents.get(cur) {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            done.extend(path);
        }
        Ok(())
    }

    pub fn is_node(&self, type_id: &str) -> bool {
        self.selected.contains_key(type_id)
            || self.parents.contains_key(type_id)
            || self.parents.values().any(|p| p == type_id)
    }

    pub fn selected(&self) -> impl Iterator<Item = SemanticType> + '_ {
        self.selected.iter().map(|(id, name)| SemanticType {
            id: id.clone(),
            name: name.clone(),
        })
    }

    /// Nearest ancestor (self included) that is a selected type.
    pub fn map_to_selected_type(&self, type_id: &str) -> Option<SemanticType> {
        let mut cur = type_id;
        // acyclic, so the walk is bounded by the number of edges
        for _ in 0..=self.parents.len() {
            if let Some(name) = self.selected.get(cur) {
                return Some(SemanticType {
                    id: cur.to_string(),
                    name: name.clone(),
                });
            }
            cur = self.parents.get(cur)?;
        }
        None
    }

    /// Reads `child TAB parent` edges and `type_id [TAB name]` selections.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn read(hierarchy: impl BufRead, selected: impl BufRead) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, line) in hierarchy.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if skip_line(line) {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next()) {
                (Some(c), Some(p)) if !c.trim().is_empty() && !p.trim().is_empty() => {
                    edges.push((c.trim().to_string(), p.trim().to_string()))
                }
                _ => {
                    return Err(Error::parse(
                        "type hierarchy",
                        i + 1,
                        "expected child TAB parent",
                    ))
                }
            }
        }
        let mut sel = Vec::new();
        for line in selected.lines() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if skip_line(line) {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let id = cols.next().unwrap_or_default().trim().to_string();
            let name = cols
                .next()
                .map(|n| n.trim().to_string())
                .filter(|n| !n.is_empty())
                .unwrap_or_else(|| id.clone());
            sel.push((id, name));
        }
        Self::new(edges, sel)
    }

    pub fn load(hierarchy: &Path, selected: &Path) -> Result<Self> {
        Self::read(io::open(hierarchy)?, io::open(selected)?)
    }
}

fn skip_line(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

/// One alias row of the ontology dump.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OntologyRecord {
    pub entity_id: String,
    pub type_id: String,
    pub name: String,
    pub name_type_tag: String,
}

/// A row that could not be parsed, with its line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MalformedRecord {
    pub line: usize,
    pub reason: String,
}

/// Parse the ontology TSV lazily. `#` comment lines and blank lines are skipped.
pub fn read_ontology_tsv(
    input: impl BufRead,
) -> impl Iterator<Item = std::result::Result<OntologyRecord, MalformedRecord>> {
    input.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                return Some(Err(MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                }))
            }
        };
        let line = line.trim_end_matches('\r');
        if skip_line(line) {
            return None;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 || cols.iter().any(|c| c.trim().is_empty()) {
            return Some(Err(MalformedRecord {
                line: i + 1,
                reason: format!("expected 4 non-empty columns, got {}", cols.len()),
            }));
        }
        Some(Ok(OntologyRecord {
            entity_id: cols[0].trim().to_string(),
            type_id: cols[1].trim().to_string(),
            name: cols[2].to_string(),
            name_type_tag: cols[3].trim().to_string(),
        }))
    })
}

/// Counters reported by [`build_alias_table`]. Every input record is either
/// an entry of the table or counted in exactly one discard bucket.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub input_records: usize,
    pub malformed: usize,
    pub unknown_name_type: usize,
    pub empty_after_cleaning: usize,
    pub unmapped_type: usize,
    pub duplicates: usize,
    /// Entities without a primary name whose first alias was promoted.
    pub promoted_primary: usize,
    /// Extra primary names demoted to synonyms.
    pub demoted_primary: usize,
    pub entities: usize,
    pub entries: usize,
}

impl BuildReport {
    pub fn discarded(&self) -> usize {
        self.malformed
            + self.unknown_name_type
            + self.empty_after_cleaning
            + self.unmapped_type
            + self.duplicates
    }
}

/// The flattened entity KB.
#[derive(Clone, Debug, Default)]
pub struct AliasTable {
    entries: Vec<AliasEntry>,
    primary: HashMap<String, usize>,
}

impl AliasTable {
    /// Wrap already-built entries, checking the one-primary-per-entity and
    /// dedup invariants.
    pub fn from_entries(entries: Vec<AliasEntry>) -> Result<Self> {
        let mut primary = HashMap::new();
        let mut seen: HashSet<(&str, &str, NameType)> = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.name.is_empty() {
                return Err(Error::Invalid(format!("entry {i} has an empty name")));
            }
            if !seen.insert((&e.name, &e.entity_id, e.name_type)) {
                return Err(Error::Invalid(format!(
                    "duplicate entry ({}, {}, {:?})",
                    e.name, e.entity_id, e.name_type
                )));
            }
            if e.name_type.is_primary() && primary.insert(e.entity_id.clone(), i).is_some() {
                return Err(Error::Invalid(format!(
                    "entity {} has more than one primary name",
                    e.entity_id
                )));
            }
        }
        for e in &entries {
            if !primary.contains_key(&e.entity_id) {
                return Err(Error::Invalid(format!(
                    "entity {} has no primary name",
                    e.entity_id
                )));
            }
        }
        Ok(Self { entries, primary })
    }

    pub fn entries(&self) -> &[AliasEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.primary.len()
    }

    pub fn contains_entity(&self, entity_id: &str) -> bool {
        self.primary.contains_key(entity_id)
    }

    pub fn primary_entry(&self, entity_id: &str) -> Option<&AliasEntry> {
        self.primary.get(entity_id).map(|&i| &self.entries[i])
    }

    pub fn count_by_name_type(&self, name_type: NameType) -> usize {
        self.entries
            .iter()
            .filter(|e| e.name_type == name_type)
            .count()
    }

    /// Canonical entity text for the linker: `"{type} , {primary}"` plus
    /// `" ({qualifier})"` when the primary name was disambiguated.
    pub fn linker_text(&self, entity_id: &str) -> Option<String> {
        let p = self.primary_entry(entity_id)?;
        Some(self.entity_text(entity_id, &p.name))
    }

    /// Entity text for the selector: like [`Self::linker_text`] but built
    /// around the alias that produced the lexical match.
    pub fn selector_text(&self, entity_id: &str, alias: &str) -> Option<String> {
        self.primary_entry(entity_id)?;
        Some(self.entity_text(entity_id, alias))
    }

    fn entity_text(&self, entity_id: &str, name: &str) -> String {
        let p = &self.entries[self.primary[entity_id]];
        let mut s = format!("{} , {}", p.semantic_type.name, name);
        if let Some(q) = &p.qualifier {
            s.push_str(" (");
            s.push_str(q);
            s.push(')');
        }
        s
    }

    pub fn write_jsonl(&self, out: impl Write) -> Result<()> {
        io::write_jsonl(out, &self.entries)
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        Self::from_entries(io::read_jsonl(input)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_jsonl(io::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(io::open(path)?)
    }
}

/// Clean, type-map, tag and deduplicate ontology records.
///
/// Each entity's semantic type is fixed by its first mappable record. An
/// entity left without a primary name gets its first alias promoted; extra
/// primaries are demoted to synonyms. A primary that carried a qualifier
/// becomes [`NameType::PrimaryNameDisambiguated`].
pub fn build_alias_table<I>(
    records: I,
    hierarchy: &TypeHierarchy,
    cleaner: &NameCleaner,
) -> Result<(AliasTable, BuildReport)>
where
    I: IntoIterator<Item = std::result::Result<OntologyRecord, MalformedRecord>>,
{
    let mut report = BuildReport::default();
    let mut entries: Vec<AliasEntry> = Vec::new();
    let mut entity_type: HashMap<String, SemanticType> = HashMap::new();
    let mut entity_order: Vec<String> = Vec::new();

    for record in records {
        report.input_records += 1;
        let record = match record {
            Ok(r) => r,
            Err(m) => {
                log::debug!("malformed ontology record at line {}: {}", m.line, m.reason);
                report.malformed += 1;
                continue;
            }
        };
        let Some(mut name_type) = NameType::from_tag(&record.name_type_tag) else {
            report.unknown_name_type += 1;
            continue;
        };
        let Ok((name, qualifier)) = cleaner.clean(&record.name) else {
            log::debug!(
                "name of {} empty after cleaning: {:?}",
                record.entity_id,
                record.name
            );
            report.empty_after_cleaning += 1;
            continue;
        };
        let semantic_type = match entity_type.get(&record.entity_id) {
            Some(t) => t.clone(),
            None => match hierarchy.map_to_selected_type(&record.type_id) {
                Some(t) => {
                    entity_type.insert(record.entity_id.clone(), t.clone());
                    entity_order.push(record.entity_id.clone());
                    t
                }
                None => {
                    report.unmapped_type += 1;
                    continue;
                }
            },
        };
        if name_type == NameType::PrimaryName && qualifier.is_some() {
            name_type = NameType::PrimaryNameDisambiguated;
        }
        entries.push(AliasEntry {
            name,
            entity_id: record.entity_id,
            semantic_type,
            name_type,
            qualifier,
        });
    }

    // exactly one primary per entity
    let mut has_primary: HashSet<String> = HashSet::new();
    for e in entries.iter_mut() {
        if e.name_type.is_primary() && !has_primary.insert(e.entity_id.clone()) {
            e.name_type = NameType::Synonym;
            report.demoted_primary += 1;
        }
    }
    for entity in &entity_order {
        if has_primary.contains(entity) {
            continue;
        }
        if let Some(e) = entries.iter_mut().find(|e| &e.entity_id == entity) {
            e.name_type = if e.qualifier.is_some() {
                NameType::PrimaryNameDisambiguated
            } else {
                NameType::PrimaryName
            };
            report.promoted_primary += 1;
        }
    }

    let mut seen: HashSet<(String, String, NameType)> = HashSet::new();
    entries.retain(|e| {
        let fresh = seen.insert((e.name.clone(), e.entity_id.clone(), e.name_type));
        if !fresh {
            report.duplicates += 1;
        }
        fresh
    });

    if entries.is_empty() {
        return Err(Error::EmptyAliasTable(format!(
            "{} records read, {} discarded",
            report.input_records,
            report.discarded()
        )));
    }
    report.entries = entries.len();
    report.entities = entity_order.len();
    let table = AliasTable::from_entries(entries)?;
    Ok((table, report))
}
