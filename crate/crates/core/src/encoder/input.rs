//! Paired `[CLS] context [SEP] entity [SEP]` inputs.

use super::vocab::{Vocabulary, CLS, PAD, SEP};
use crate::preprocess::Document;

/// A document as vocabulary ids, with the piece range of every token.
#[derive(Clone, Debug)]
pub struct DocPieces {
    ids: Vec<u32>,
    tokens: Vec<Vec<(usize, usize)>>,
}

impl DocPieces {
    pub fn new(doc: &Document, vocab: &Vocabulary) -> Self {
        let mut ids = Vec::new();
        let tokens = doc
            .sentences
            .iter()
            .map(|sentence| {
                sentence
                    .iter()
                    .map(|t| {
                        let start = ids.len();
                        ids.extend(vocab.encode(&t.text));
                        (start, ids.len())
                    })
                    .collect()
            })
            .collect();
        Self { ids, tokens }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Piece range of tokens `[start, end)` of `sentence`.
    pub fn span(&self, sentence: usize, start: usize, end: usize) -> (usize, usize) {
        let toks = &self.tokens[sentence];
        (toks[start].0, toks[end - 1].1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossInput {
    pub ids: Vec<u32>,
    /// 0 for `[CLS]`, context and the first `[SEP]`; 1 for the entity text
    /// and the final `[SEP]`.
    pub segments: Vec<u8>,
    pub mention_mask: Vec<bool>,
    /// False on padding.
    pub attention_mask: Vec<bool>,
    /// The mention or entity text did not fit.
    pub truncated: bool,
}

impl CrossInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Right-pad with `[PAD]` to `len` positions.
    pub fn padded(mut self, len: usize) -> Self {
        while self.ids.len() < len {
            self.ids.push(PAD);
            self.segments.push(0);
            self.mention_mask.push(false);
            self.attention_mask.push(false);
        }
        self
    }
}

/// Mention `[start, end)` of `sentence` centered in a symmetric window of
/// document context, followed by `entity_text`. The context shrinks first;
/// the mention tail and then the entity tail are cut only when nothing else
/// is left, and `truncated` is set.
pub fn build_cross_input(
    doc: &DocPieces,
    sentence: usize,
    start: usize,
    end: usize,
    entity_text: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> CrossInput {
    assert!(
        max_len >= 5,
        "max_len must leave room for a mention and an entity piece"
    );
    let mut truncated = false;
    let mut entity = vocab.encode(entity_text);
    if entity.len() + 4 > max_len {
        entity.truncate(max_len - 4);
        truncated = true;
    }
    let budget = max_len - 3 - entity.len();
    let (ms, mut me) = doc.span(sentence, start, end);
    if me - ms > budget {
        me = ms + budget;
        truncated = true;
    }
    let extra = budget - (me - ms);
    let left_avail = ms;
    let right_avail = doc.len() - me;
    let mut left = (extra / 2).min(left_avail);
    let right = (extra - left).min(right_avail);
    left = (extra - right).min(left_avail);
    let (cs, ce) = (ms - left, me + right);

    let mut ids = Vec::with_capacity(ce - cs + entity.len() + 3);
    ids.push(CLS);
    ids.extend_from_slice(&doc.ids[cs..ce]);
    ids.push(SEP);
    let seg0 = ids.len();
    ids.extend_from_slice(&entity);
    ids.push(SEP);

    let n = ids.len();
    let mut mention_mask = vec![false; n];
    for m in &mut mention_mask[1 + ms - cs..1 + me - cs] {
        *m = true;
    }
    CrossInput {
        segments: (0..n).map(|i| u8::from(i >= seg0)).collect(),
        attention_mask: vec![true; n],
        mention_mask,
        ids,
        truncated,
    }
}
