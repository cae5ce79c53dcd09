//! IOB2 tagging: one `token TAB tag` line per token, a blank line between
//! sentences. Tags are `O`, `B-{type}|{entity}` or `I-{type}|{entity}`.

use std::fmt::Write as _;

use super::{check_non_overlapping, Document, Mention};
use crate::error::{Error, Result};

pub fn emit_iob2(doc: &Document) -> Result<String> {
    check_non_overlapping(doc)?;
    let mut tags: Vec<Vec<String>> = doc
        .sentences
        .iter()
        .map(|s| vec!["O".to_string(); s.len()])
        .collect();
    for m in &doc.mentions {
        let row = tags.get_mut(m.sentence).ok_or_else(|| {
            Error::Invalid(format!(
                "{}: mention sentence {} out of range",
                doc.doc_id, m.sentence
            ))
        })?;
        if m.end > row.len() || m.start >= m.end {
            return Err(Error::Invalid(format!(
                "{}: mention span {}..{} invalid for sentence {}",
                doc.doc_id, m.start, m.end, m.sentence
            )));
        }
        let label = format!("{}|{}", m.semantic_type, m.entity_id);
        row[m.start] = format!("B-{label}");
        for tag in &mut row[m.start + 1..m.end] {
            *tag = format!("I-{label}");
        }
    }
    let mut out = String::new();
    for (sentence, row) in doc.sentences.iter().zip(&tags) {
        for (tok, tag) in sentence.iter().zip(row) {
            let _ = writeln!(out, "{}\t{}", tok.text, tag);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parsed IOB2 file: token texts per sentence and the tagged mentions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Iob2Doc {
    pub sentences: Vec<Vec<String>>,
    pub mentions: Vec<Mention>,
}

pub fn parse_iob2(input: &str) -> Result<Iob2Doc> {
    let mut doc = Iob2Doc::default();
    let mut tokens: Vec<String> = Vec::new();
    let mut open: Option<Mention> = None;

    let close = |open: &mut Option<Mention>, doc: &mut Iob2Doc| {
        if let Some(m) = open.take() {
            doc.mentions.push(m);
        }
    };

    for (i, line) in input.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            close(&mut open, &mut doc);
            if !tokens.is_empty() {
                doc.sentences.push(std::mem::take(&mut tokens));
            }
            continue;
        }
        let (token, tag) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse("iob2", i + 1, "expected token TAB tag"))?;
        let position = tokens.len();
        let sentence = doc.sentences.len();
        tokens.push(token.to_string());
        if tag == "O" {
            close(&mut open, &mut doc);
            continue;
        }
        let (prefix, label) = tag
            .split_once('-')
            .ok_or_else(|| Error::parse("iob2", i + 1, format!("bad tag {tag:?}")))?;
        let (ty, entity) = label
            .split_once('|')
            .ok_or_else(|| Error::parse("iob2", i + 1, format!("tag {tag:?} lacks type|entity")))?;
        let continues = prefix == "I"
            && open
                .as_ref()
                .is_some_and(|m| m.entity_id == entity && m.semantic_type == ty);
        match (prefix, continues) {
            ("I", true) => open.as_mut().unwrap().end = position + 1,
            ("B", _) | ("I", false) => {
                close(&mut open, &mut doc);
                open = Some(Mention {
                    sentence,
                    start: position,
                    end: position + 1,
                    entity_id: entity.to_string(),
                    semantic_type: ty.to_string(),
                });
            }
            _ => {
                return Err(Error::parse(
                    "iob2",
                    i + 1,
                    format!("bad tag prefix {prefix:?}"),
                ))
            }
        }
    }
    close(&mut open, &mut doc);
    if !tokens.is_empty() {
        doc.sentences.push(tokens);
    }
    Ok(doc)
}
