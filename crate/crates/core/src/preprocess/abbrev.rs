//! Abbreviation definitions: detection and in-text expansion.
//!
//! Detection is a simplified Schwartz–Hearst matcher: a parenthesized short
//! form of at most two words is paired with the shortest run of preceding
//! words whose characters cover the short form right to left, the first short
//! form character landing on a word start.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{RawDocument, RawMention};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbbrevDefinition {
    pub short_form: String,
    pub long_form: String,
    /// Byte offset of the long form; `"{long} ({short})"` starts here.
    pub offset: usize,
}

const MAX_SHORT_CHARS: usize = 10;

/// Find `long (short)` definitions, left to right, non-overlapping.
pub fn detect_abbreviations(text: &str) -> Vec<AbbrevDefinition> {
    let mut defs = Vec::new();
    let mut floor = 0usize;
    for (open, _) in text.match_indices('(') {
        if open < floor {
            continue;
        }
        let Some(close_rel) = text[open + 1..].find([')', '(']) else {
            continue;
        };
        let close = open + 1 + close_rel;
        if text.as_bytes()[close] != b')' {
            continue;
        }
        let short = text[open + 1..close].trim();
        if !valid_short_form(short) {
            continue;
        }
        let window_start = long_form_window_start(text, floor, open);
        let window = &text[window_start..open];
        let Some(long_rel) = best_long_form(short, window) else {
            continue;
        };
        let long = window[long_rel..].trim_end();
        let max_words = (short.chars().count() + 5).min(2 * short.chars().count());
        if long.chars().count() <= short.chars().count()
            || long.split_whitespace().count() > max_words
        {
            continue;
        }
        defs.push(AbbrevDefinition {
            short_form: short.to_string(),
            long_form: long.to_string(),
            offset: window_start + long_rel,
        });
        floor = close + 1;
    }
    defs
}

fn valid_short_form(short: &str) -> bool {
    let n = short.chars().count();
    (2..=MAX_SHORT_CHARS).contains(&n)
        && short.split_whitespace().count() <= 2
        && short.chars().next().is_some_and(char::is_alphanumeric)
        && short.chars().any(char::is_alphabetic)
        && !short.contains([',', ';', '='])
}

/// The long form may not reach back past an earlier definition, a bracket,
/// or a sentence end.
fn long_form_window_start(text: &str, floor: usize, open: usize) -> usize {
    let head = &text[floor..open];
    let mut start = floor;
    for (i, ch) in head.char_indices() {
        let after = i + ch.len_utf8();
        let stop = match ch {
            '(' | ')' | '[' | ']' | ';' => true,
            '.' | '!' | '?' => head[after..].starts_with(char::is_whitespace),
            _ => false,
        };
        if stop {
            start = floor + after;
        }
    }
    start
}

/// Byte offset within `window` where the long form starts.
fn best_long_form(short: &str, window: &str) -> Option<usize> {
    let s: Vec<char> = short.chars().flat_map(char::to_lowercase).collect();
    let l: Vec<(usize, char)> = window
        .char_indices()
        .map(|(i, c)| (i, c.to_lowercase().next().unwrap_or(c)))
        .collect();
    let mut si = s.len() as isize - 1;
    let mut li = l.len() as isize - 1;
    while si >= 0 {
        let c = s[si as usize];
        if !c.is_alphanumeric() {
            si -= 1;
            continue;
        }
        loop {
            if li < 0 {
                return None;
            }
            let lc = l[li as usize].1;
            let word_start = li == 0 || !l[li as usize - 1].1.is_alphanumeric();
            if lc == c && (si > 0 || word_start) {
                break;
            }
            li -= 1;
        }
        li -= 1;
        si -= 1;
    }
    // back up to the beginning of the word holding the first match
    let first = (li + 1) as usize;
    let mut start = first;
    while start > 0 && !l[start - 1].1.is_whitespace() {
        start -= 1;
    }
    Some(l[start].0)
}

/// Find the definition site of an externally supplied `(short, long)` pair.
pub fn locate_definition(text: &str, short: &str, long: &str) -> Option<AbbrevDefinition> {
    text.match_indices(long)
        .find(|&(pos, _)| definition_end(text, pos, long, short).is_some())
        .map(|(pos, _)| AbbrevDefinition {
            short_form: short.to_string(),
            long_form: long.to_string(),
            offset: pos,
        })
}

/// End (exclusive) of `"{long} ({short})"` when it starts at `offset`.
fn definition_end(text: &str, offset: usize, long: &str, short: &str) -> Option<usize> {
    let rest = text.get(offset..)?.strip_prefix(long)?;
    let after_ws = rest.trim_start();
    let inner = after_ws.strip_prefix('(')?.trim_start();
    let after_short = inner.strip_prefix(short)?.trim_start();
    let tail = after_short.strip_prefix(')')?;
    Some(text.len() - tail.len())
}

/// Reads `doc_id TAB short TAB long` rows.
pub fn read_definitions_tsv(input: impl BufRead) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::parse(
                "abbreviation definitions",
                i + 1,
                "expected doc_id TAB short TAB long",
            ));
        }
        out.push((
            cols[0].trim().to_string(),
            cols[1].trim().to_string(),
            cols[2].trim().to_string(),
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub definitions: usize,
    pub replaced_occurrences: usize,
    /// Mentions on the parenthesized short form at a definition site.
    pub dropped_mentions: usize,
    /// Mentions whose boundary fell strictly inside a replaced short form.
    pub broken_mentions: usize,
    /// Occurrences skipped because they overlapped an earlier replacement.
    pub conflicts: usize,
}

#[derive(Clone, Debug)]
struct Edit {
    start: usize,
    end: usize,
    replacement: String,
    deletion: bool,
}

/// Rewrite `doc` so each definition `"long (short)"` reads `"long"` and every
/// other occurrence of `short` reads `long`. Mentions are moved with the text;
/// mentions on a deleted definition-site short form are dropped.
pub fn expand_abbreviations(
    doc: &RawDocument,
    defs: &[AbbrevDefinition],
) -> (RawDocument, ExpansionReport) {
    let text = doc.text();
    let mut report = ExpansionReport::default();
    let mut edits: Vec<Edit> = Vec::new();

    let overlaps =
        |edits: &[Edit], s: usize, e: usize| edits.iter().any(|x| s < x.end && x.start < e);

    let mut active: Vec<&AbbrevDefinition> = Vec::new();
    for def in defs {
        let Some(end) = definition_end(&text, def.offset, &def.long_form, &def.short_form) else {
            log::debug!(
                "{}: definition {:?} not found at offset {}",
                doc.doc_id,
                def.short_form,
                def.offset
            );
            continue;
        };
        let start = def.offset + def.long_form.len();
        if overlaps(&edits, def.offset, end)
            || active.iter().any(|d| d.short_form == def.short_form)
        {
            report.conflicts += 1;
            continue;
        }
        edits.push(Edit {
            start,
            end,
            replacement: String::new(),
            deletion: true,
        });
        active.push(def);
        report.definitions += 1;
    }
    // definition sites are protected from occurrence replacement
    let sites: Vec<(usize, usize)> = active
        .iter()
        .zip(edits.iter())
        .map(|(d, e)| (d.offset, e.end))
        .collect();

    for def in &active {
        for (pos, m) in text.match_indices(def.short_form.as_str()) {
            let end = pos + m.len();
            if !word_bounded(&text, pos, end) {
                continue;
            }
            if sites.iter().any(|&(s, e)| pos < e && s < end) || overlaps(&edits, pos, end) {
                if !sites.iter().any(|&(s, e)| pos >= s && end <= e) {
                    report.conflicts += 1;
                }
                continue;
            }
            edits.push(Edit {
                start: pos,
                end,
                replacement: def.long_form.clone(),
                deletion: false,
            });
            report.replaced_occurrences += 1;
        }
    }
    edits.sort_by_key(|e| e.start);

    let mut new_text = String::with_capacity(text.len());
    let mut last = 0;
    for e in &edits {
        new_text.push_str(&text[last..e.start]);
        new_text.push_str(&e.replacement);
        last = e.end;
    }
    new_text.push_str(&text[last..]);

    let mut mentions = Vec::with_capacity(doc.mentions.len());
    for m in &doc.mentions {
        if edits
            .iter()
            .any(|e| e.deletion && m.start >= e.start && m.end <= e.end)
        {
            report.dropped_mentions += 1;
            continue;
        }
        let broken = edits.iter().any(|e| {
            !e.deletion
                && ((m.start > e.start && m.start < e.end) || (m.end > e.start && m.end < e.end))
        });
        if broken {
            report.broken_mentions += 1;
            continue;
        }
        let start = map_position(&edits, m.start, false);
        let end = map_position(&edits, m.end, true);
        if start >= end {
            report.dropped_mentions += 1;
            continue;
        }
        mentions.push(RawMention {
            start,
            end,
            text: new_text[start..end].to_string(),
            semantic_type: m.semantic_type.clone(),
            entity_id: m.entity_id.clone(),
        });
    }

    let title_end = map_position(&edits, doc.title.len(), true).min(new_text.len());
    let (title, body) = split_title(&new_text, title_end);
    let out = RawDocument {
        doc_id: doc.doc_id.clone(),
        title,
        body,
        mentions,
    };
    (out, report)
}

fn split_title(text: &str, title_end: usize) -> (String, String) {
    let title = text[..title_end].to_string();
    let body = text[title_end..]
        .strip_prefix(' ')
        .unwrap_or(&text[title_end..])
        .to_string();
    (title, body)
}

fn word_bounded(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

/// Map a byte position of the old text into the rewritten text. Positions
/// strictly inside an edit snap to its start (`is_end == false`) or to the
/// end of its replacement (`is_end == true`).
fn map_position(edits: &[Edit], pos: usize, is_end: bool) -> usize {
    let mut delta: isize = 0;
    for e in edits {
        if pos <= e.start {
            break;
        }
        if pos >= e.end {
            delta += e.replacement.len() as isize - (e.end - e.start) as isize;
            continue;
        }
        let base = (e.start as isize + delta) as usize;
        return if is_end {
            base + e.replacement.len()
        } else {
            base
        };
    }
    (pos as isize + delta) as usize
}
