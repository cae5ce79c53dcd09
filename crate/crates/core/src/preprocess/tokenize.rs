//! Rule-based tokenizer and sentence splitter.
//!
//! Text is split on whitespace, leading and trailing punctuation is detached
//! into separate tokens, and a sentence ends at a standalone `.`, `!` or `?`
//! token that is followed by a token starting with an uppercase letter.
//! Tokens on the protected list (e.g. `"E."`, `"e.g."`) keep their period.

use std::collections::HashSet;

use super::Token;

const PROTECTED: &[&str] = &[
    "al.", "e.g.", "i.e.", "vs.", "cf.", "ca.", "approx.", "Fig.", "Figs.", "fig.", "Dr.", "Mr.",
    "Mrs.", "Ms.", "Prof.", "No.", "Eq.", "Ref.", "sp.", "spp.", "St.", "Inc.", "Ltd.", "Jr.",
    "Sr.", "Vol.", "pp.", "resp.",
];

const CLOSERS: &[&str] = &[")", "]", "\"", "'", "”", "’"];

#[derive(Clone, Debug)]
pub struct Tokenizer {
    protected: HashSet<String>,
}

impl Default for Tokenizer {
    /// Common scientific abbreviations plus single-capital initials (`"E."`).
    fn default() -> Self {
        let mut protected: HashSet<String> = PROTECTED.iter().map(|s| s.to_string()).collect();
        for c in 'A'..='Z' {
            protected.insert(format!("{c}."));
        }
        Self { protected }
    }
}

impl Tokenizer {
    pub fn with_protected<I, S>(protected: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            protected: protected.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_protected(&self, token: &str) -> bool {
        self.protected.contains(token)
    }

    /// Tokenize and sentence-split `text`.
    pub fn segment(&self, text: &str) -> Vec<Vec<Token>> {
        self.segment_with(text, &[], &[])
    }

    /// Like [`Self::segment`], but additionally splits tokens at every byte
    /// offset in `boundaries` and never ends a sentence strictly inside any of
    /// the `no_break` byte ranges.
    pub fn segment_with(
        &self,
        text: &str,
        boundaries: &[usize],
        no_break: &[(usize, usize)],
    ) -> Vec<Vec<Token>> {
        let tokens = self.tokenize(text, boundaries);
        split_sentences(tokens, no_break)
    }

    fn tokenize(&self, text: &str, boundaries: &[usize]) -> Vec<Token> {
        let mut cuts: Vec<usize> = boundaries.to_vec();
        cuts.sort_unstable();
        cuts.dedup();

        let mut tokens = Vec::new();
        for (chunk_start, chunk) in whitespace_chunks(text) {
            let chunk_end = chunk_start + chunk.len();
            let lo = cuts.partition_point(|&c| c <= chunk_start);
            let hi = cuts.partition_point(|&c| c < chunk_end);
            let mut piece_start = chunk_start;
            for &cut in cuts[lo..hi].iter().chain(std::iter::once(&chunk_end)) {
                if cut > piece_start && text.is_char_boundary(cut) {
                    self.split_piece(text, piece_start, cut, &mut tokens);
                    piece_start = cut;
                }
            }
        }
        tokens
    }

    fn split_piece(&self, text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
        let mut lo = start;
        let mut hi = end;
        // leading punctuation, one char per token
        while lo < hi && !self.is_protected(&text[lo..hi]) {
            let ch = text[lo..hi].chars().next().unwrap();
            if ch.is_alphanumeric() {
                break;
            }
            out.push(token(text, lo, lo + ch.len_utf8()));
            lo += ch.len_utf8();
        }
        let mut trailing = Vec::new();
        while lo < hi && !self.is_protected(&text[lo..hi]) {
            let ch = text[lo..hi].chars().next_back().unwrap();
            if ch.is_alphanumeric() {
                break;
            }
            trailing.push(token(text, hi - ch.len_utf8(), hi));
            hi -= ch.len_utf8();
        }
        if lo < hi {
            out.push(token(text, lo, hi));
        }
        out.extend(trailing.into_iter().rev());
    }
}

fn token(text: &str, start: usize, end: usize) -> Token {
    Token {
        text: text[start..end].to_string(),
        start,
        end,
    }
}

fn whitespace_chunks(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut chunks = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                chunks.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        chunks.push((s, &text[s..]));
    }
    chunks.into_iter()
}

fn split_sentences(tokens: Vec<Token>, no_break: &[(usize, usize)]) -> Vec<Vec<Token>> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut iter = tokens.into_iter().peekable();
    while let Some(tok) = iter.next() {
        current.push(tok);
        let Some(next) = iter.peek() else { break };
        if !starts_upper(&next.text) {
            continue;
        }
        // last non-closing token must be a terminator
        let terminated = current
            .iter()
            .rev()
            .find(|t| !CLOSERS.contains(&t.text.as_str()))
            .is_some_and(|t| matches!(t.text.as_str(), "." | "!" | "?"));
        if !terminated {
            continue;
        }
        let boundary = current.last().unwrap().end;
        if no_break.iter().any(|&(s, e)| s < boundary && boundary < e) {
            continue;
        }
        sentences.push(std::mem::take(&mut current));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

fn starts_upper(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &[Vec<Token>]) -> Vec<Vec<&str>> {
        s.iter()
            .map(|sent| sent.iter().map(|t| t.text.as_str()).collect())
            .collect()
    }

    #[test]
    fn two_sentences() {
        let s = Tokenizer::default().segment("Flu kills. It spreads.");
        assert_eq!(
            texts(&s),
            vec![vec!["Flu", "kills", "."], vec!["It", "spreads", "."]]
        );
    }

    #[test]
    fn protected_initial() {
        let s = Tokenizer::default().segment("E. coli grows.");
        assert_eq!(texts(&s), vec![vec!["E.", "coli", "grows", "."]]);
        let s = Tokenizer::default().segment("Dr. Smith left.");
        assert_eq!(s.len(), 1);
        let s = Tokenizer::with_protected(Vec::<String>::new()).segment("Dr. Smith left.");
        assert_eq!(texts(&s), vec![vec!["Dr", "."], vec!["Smith", "left", "."]]);
    }

    #[test]
    fn empty_text() {
        assert!(Tokenizer::default().segment("").is_empty());
        assert!(Tokenizer::default().segment("   \n ").is_empty());
    }

    #[test]
    fn punctuation_detached() {
        let s = Tokenizer::default().segment("(see e.g., IL-2 levels).");
        assert_eq!(
            texts(&s),
            vec![vec!["(", "see", "e.g.", ",", "IL-2", "levels", ")", "."]]
        );
    }

    #[test]
    fn offsets_invert() {
        let text = "Naïve T-cells (CD4+) respond.  Then «they» rest!";
        let s = Tokenizer::default().segment(text);
        for t in s.iter().flatten() {
            assert_eq!(&text[t.start..t.end], t.text);
        }
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn forced_boundaries_and_no_break() {
        let text = "The HbA1c test. Results follow.";
        let s = Tokenizer::default().segment_with(text, &[7], &[]);
        assert_eq!(texts(&s)[0], vec!["The", "HbA", "1c", "test", "."]);
        let s = Tokenizer::default().segment_with(text, &[], &[(8, 20)]);
        assert_eq!(s.len(), 1);
    }
}
