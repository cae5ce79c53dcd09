use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::preprocess::Document;
use crate::text::is_punct;

const STOP_WORDS: &str = "\
a about above after again against all almost also although always am among an and another any are \
as at be because been before being below between both but by can cannot could did do does doing done \
down due during each either else enough especially etc even ever every for from further had has have \
having he her here hers herself him himself his how however i if in into is it its itself just least \
less many may me might more most mostly much must my myself neither no nor not now of off often on \
once only or other others otherwise our ours ourselves out over own per perhaps quite rather really \
same several shall she should since so some such than that the their theirs them themselves then \
there therefore these they this those though through thus to together too under until up upon us \
very via was we were what whatever when where whereas whether which while who whom whose why will \
with within without would yet you your yours yourself";

/// Case-insensitive stop word set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

impl Default for StopList {
    fn default() -> Self {
        Self::new(STOP_WORDS.split_whitespace())
    }
}

impl StopList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    /// Stop word or punctuation: a token no span may start or end with.
    pub fn blocks(&self, token: &str) -> bool {
        is_punct(token) || self.contains(token)
    }
}

/// A token span `[start, end)` inside one sentence.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateSpan {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl CandidateSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Every span of at most `max_len` tokens whose first and last tokens are
/// neither stop words nor punctuation, ordered by sentence, start, end.
pub fn enumerate_candidate_spans(
    doc: &Document,
    max_len: usize,
    stop: &StopList,
) -> Vec<CandidateSpan> {
    let mut spans = Vec::new();
    for (s, tokens) in doc.sentences.iter().enumerate() {
        let open: Vec<bool> = tokens.iter().map(|t| !stop.blocks(&t.text)).collect();
        for start in (0..tokens.len()).filter(|&i| open[i]) {
            let last = (start + max_len).min(tokens.len());
            for end in (start + 1..=last).filter(|&e| open[e - 1]) {
                spans.push(CandidateSpan {
                    doc_id: doc.doc_id.clone(),
                    sentence: s,
                    start,
                    end,
                    text: doc.span_text(s, start, end).to_string(),
                });
            }
        }
    }
    spans
}
