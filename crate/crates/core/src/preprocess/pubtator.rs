//! PubTator reader and writer.
//!
//! Title and abstract lines, then tab-separated annotation lines:
//! ```text
//! 25763772|t|DCTN4 as a modifier of chronic Pseudomonas aeruginosa infection
//! 25763772|a|Pseudomonas aeruginosa (Pa) infection ...
//! 25763772    0    5    DCTN4    T116,T123    C4308010
//! ```
//!
//! Offsets count characters of `title + " " + abstract`. Internally they are
//! converted to byte offsets.

use std::io::{BufRead, Write};

use super::{RawDocument, RawMention};
use crate::error::{Error, Result};
use crate::text::{byte_to_char, char_to_byte};

pub fn read_pubtator(input: impl BufRead) -> Result<Vec<RawDocument>> {
    let mut docs: Vec<RawDocument> = Vec::new();
    let mut current: Option<RawDocument> = None;
    let mut pending: Vec<(usize, usize, usize, String, String, String)> = Vec::new();

    let finish = |doc: Option<RawDocument>,
                  pending: &mut Vec<(usize, usize, usize, String, String, String)>,
                  docs: &mut Vec<RawDocument>|
     -> Result<()> {
        let Some(mut doc) = doc else {
            if let Some(p) = pending.first() {
                return Err(Error::parse(
                    "pubtator",
                    p.0,
                    "mention before any title line",
                ));
            }
            return Ok(());
        };
        let text = doc.text();
        let n_chars = text.chars().count();
        for (line, cs, ce, surface, ty, entity) in pending.drain(..) {
            if cs >= ce || ce > n_chars {
                return Err(Error::parse(
                    "pubtator",
                    line,
                    format!("offsets {cs}..{ce} outside document of {n_chars} chars"),
                ));
            }
            let start = char_to_byte(&text, cs);
            let end = char_to_byte(&text, ce);
            if text[start..end] != surface {
                log::warn!(
                    "{} line {line}: mention text {:?} differs from document text {:?}",
                    doc.doc_id,
                    surface,
                    &text[start..end]
                );
            }
            doc.mentions.push(RawMention {
                start,
                end,
                text: text[start..end].to_string(),
                semantic_type: ty,
                entity_id: entity,
            });
        }
        docs.push(doc);
        Ok(())
    };

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        if let Some((id, rest)) = line.split_once("|t|") {
            if !id.contains('\t') {
                finish(current.take(), &mut pending, &mut docs)?;
                current = Some(RawDocument {
                    doc_id: id.to_string(),
                    title: rest.to_string(),
                    body: String::new(),
                    mentions: Vec::new(),
                });
                continue;
            }
        }
        if let Some((id, rest)) = line.split_once("|a|") {
            if !id.contains('\t') {
                match current.as_mut() {
                    Some(doc) if doc.doc_id == id => doc.body = rest.to_string(),
                    _ => {
                        return Err(Error::parse(
                            "pubtator",
                            line_no,
                            format!("abstract for {id} without matching title"),
                        ))
                    }
                }
                continue;
            }
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 6 {
            return Err(Error::parse(
                "pubtator",
                line_no,
                format!("expected 6 tab-separated columns, got {}", cols.len()),
            ));
        }
        match current.as_ref() {
            Some(doc) if doc.doc_id == cols[0] => {}
            _ => {
                return Err(Error::parse(
                    "pubtator",
                    line_no,
                    format!("mention for {} outside its document block", cols[0]),
                ))
            }
        }
        let parse_off = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse("pubtator", line_no, e.to_string()))
        };
        pending.push((
            line_no,
            parse_off(cols[1])?,
            parse_off(cols[2])?,
            cols[3].to_string(),
            cols[4].to_string(),
            cols[5].to_string(),
        ));
    }
    finish(current.take(), &mut pending, &mut docs)?;
    Ok(docs)
}

pub fn write_pubtator(mut out: impl Write, docs: &[RawDocument]) -> Result<()> {
    for doc in docs {
        writeln!(out, "{}|t|{}", doc.doc_id, doc.title)?;
        writeln!(out, "{}|a|{}", doc.doc_id, doc.body)?;
        let text = doc.text();
        for m in &doc.mentions {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                doc.doc_id,
                byte_to_char(&text, m.start),
                byte_to_char(&text, m.end),
                m.text,
                m.semantic_type,
                m.entity_id
            )?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
