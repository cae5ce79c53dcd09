//! Character and word n-gram TF-IDF vectorizers over lemmatized names.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::text::alnum_words;

/// Lowercasing plus a handful of English plural-stripping rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemmatizer {
    pub enabled: bool,
}

impl Default for Lemmatizer {
    fn default() -> Self {
        Self { enabled: true }
    }
}

impl Lemmatizer {
    /// Lowercased alphanumeric words, each lemmatized.
    pub fn words(&self, text: &str) -> Vec<String> {
        let mut words = alnum_words(text);
        if self.enabled {
            for w in &mut words {
                *w = lemmatize_word(w);
            }
        }
        words
    }
}

fn lemmatize_word(word: &str) -> String {
    let n = word.chars().count();
    if !word.chars().all(char::is_alphabetic) {
        return word.to_string();
    }
    if n > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    for suffix in ["sses", "ches", "shes", "xes", "zes"] {
        if n > suffix.len() + 1 && word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if n > 3
        && word.ends_with('s')
        && !(word.ends_with("ss") || word.ends_with("us") || word.ends_with("is"))
    {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NgramMode {
    /// Character n-grams of the space-joined lemmatized words, `min..=max`.
    Char { min: usize, max: usize },
    /// Word unigrams.
    Word,
}

impl NgramMode {
    pub fn terms(&self, words: &[String]) -> Vec<String> {
        match *self {
            NgramMode::Word => words.to_vec(),
            NgramMode::Char { min, max } => {
                let joined: Vec<char> = words.join(" ").chars().collect();
                let mut out = Vec::new();
                for n in min..=max {
                    if n == 0 || n > joined.len() {
                        continue;
                    }
                    out.extend(joined.windows(n).map(|w| w.iter().collect::<String>()));
                }
                out
            }
        }
    }
}

/// Sparse vector with strictly increasing feature ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Merge dot product, summed in increasing feature order.
    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Equal => {
                    sum += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        sum
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// TF-IDF with smoothed idf `ln((1 + N) / (1 + df)) + 1` and L2-normalized
/// output. The vocabulary holds the `max_features` most frequent terms (ties
/// broken lexicographically) and is frozen after fitting.
#[derive(Clone, Debug)]
pub struct TfidfVectorizer {
    mode: NgramMode,
    features: Vec<String>,
    idf: Vec<f64>,
    lookup: HashMap<String, u32>,
}

impl TfidfVectorizer {
    /// Fit on documents given as lemmatized word lists.
    pub fn fit<S: AsRef<[String]>>(
        docs: &[S],
        mode: NgramMode,
        max_features: usize,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        // term -> (total count, document frequency)
        let mut counts: HashMap<String, (u64, u64)> = HashMap::new();
        for doc in docs {
            let mut terms = mode.terms(doc.as_ref());
            let total = terms.len();
            terms.sort_unstable();
            let mut i = 0;
            while i < total {
                let mut j = i + 1;
                while j < total && terms[j] == terms[i] {
                    j += 1;
                }
                let entry = counts
                    .entry(std::mem::take(&mut terms[i]))
                    .or_insert((0, 0));
                entry.0 += (j - i) as u64;
                entry.1 += 1;
                i = j;
            }
        }
        let mut ranked: Vec<(String, (u64, u64))> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_features);
        ranked.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let n = docs.len() as f64;
        let idf = ranked
            .iter()
            .map(|(_, (_, df))| ((1.0 + n) / (1.0 + *df as f64)).ln() + 1.0)
            .collect();
        let features: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
        Ok(Self::from_parts(mode, features, idf))
    }

    fn from_parts(mode: NgramMode, features: Vec<String>, idf: Vec<f64>) -> Self {
        let lookup = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();
        Self {
            mode,
            features,
            idf,
            lookup,
        }
    }

    pub fn mode(&self) -> NgramMode {
        self.mode
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// L2-normalized TF-IDF vector; out-of-vocabulary terms are ignored.
    pub fn transform(&self, words: &[String]) -> SparseVec {
        let mut tf: HashMap<u32, f64> = HashMap::new();
        for term in self.mode.terms(words) {
            if let Some(&id) = self.lookup.get(&term) {
                *tf.entry(id).or_insert(0.0) += 1.0;
            }
        }
        let mut pairs: Vec<(u32, f64)> = tf
            .into_iter()
            .map(|(id, c)| (id, c * self.idf[id as usize]))
            .collect();
        pairs.sort_unstable_by_key(|p| p.0);
        let norm = pairs.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVec::default();
        }
        SparseVec {
            indices: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1 / norm).collect(),
        }
    }

    pub(crate) fn write<W: std::io::Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        match self.mode {
            NgramMode::Char { min, max } => {
                w.u32(0)?;
                w.u32(min as u32)?;
                w.u32(max as u32)?;
            }
            NgramMode::Word => {
                w.u32(1)?;
                w.u32(0)?;
                w.u32(0)?;
            }
        }
        w.u64(self.features.len() as u64)?;
        for f in &self.features {
            w.str(f)?;
        }
        w.f64s(&self.idf)
    }

    pub(crate) fn read<R: std::io::Read>(r: &mut BinReader<R>) -> Result<Self> {
        let kind = r.u32()?;
        let min = r.u32()? as usize;
        let max = r.u32()? as usize;
        let mode = match kind {
            0 => NgramMode::Char { min, max },
            1 => NgramMode::Word,
            k => return Err(Error::format("vectorizer", format!("unknown mode {k}"))),
        };
        let n = r.read_len()?;
        let mut features = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            features.push(r.str()?);
        }
        let idf = r.f64s()?;
        if idf.len() != features.len() {
            return Err(Error::format("vectorizer", "idf length mismatch"));
        }
        Ok(Self::from_parts(mode, features, idf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        Lemmatizer::default().words(s)
    }

    #[test]
    fn lemmatizer_rules() {
        assert_eq!(words("Studies of Cells"), vec!["study", "of", "cell"]);
        assert_eq!(
            words("boxes glass virus analysis"),
            vec!["box", "glass", "virus", "analysis"]
        );
        assert_eq!(words("IL-2s"), vec!["il", "2s"]);
        let off = Lemmatizer { enabled: false };
        assert_eq!(off.words("Cells"), vec!["cells"]);
    }

    #[test]
    fn char_terms() {
        let t = NgramMode::Char { min: 2, max: 3 }.terms(&["ab".into(), "c".into()]);
        assert_eq!(t, vec!["ab", "b ", " c", "ab ", "b c"]);
        assert!(NgramMode::Char { min: 2, max: 5 }
            .terms(&["a".into()])
            .is_empty());
    }

    #[test]
    fn vocabulary_from_observed_ngrams() {
        let docs: Vec<Vec<String>> = ["heart", "heart attack", "lung"]
            .iter()
            .map(|s| words(s))
            .collect();
        let v = TfidfVectorizer::fit(&docs, NgramMode::Char { min: 2, max: 5 }, 200_000).unwrap();
        let observed: std::collections::HashSet<String> = docs
            .iter()
            .flat_map(|d| NgramMode::Char { min: 2, max: 5 }.terms(d))
            .collect();
        assert!(v.features().iter().all(|f| observed.contains(f)));
        assert_eq!(v.len(), observed.len());

        let again =
            TfidfVectorizer::fit(&docs, NgramMode::Char { min: 2, max: 5 }, 200_000).unwrap();
        assert_eq!(again.features(), v.features());
        assert_eq!(again.idf(), v.idf());
    }

    #[test]
    fn max_features_keeps_most_frequent() {
        let docs = vec![words("a a a b b c"), words("b d")];
        let v = TfidfVectorizer::fit(&docs, NgramMode::Word, 2).unwrap();
        assert_eq!(v.features(), &["a".to_string(), "b".to_string()]);
        // tie on count: lexicographic
        let v = TfidfVectorizer::fit(&[words("z y x")], NgramMode::Word, 2).unwrap();
        assert_eq!(v.features(), &["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn vectors_are_normalized() {
        let docs = vec![words("heart attack"), words("lung")];
        let v = TfidfVectorizer::fit(&docs, NgramMode::Word, 10).unwrap();
        let x = v.transform(&words("heart heart attack"));
        assert!((x.norm() - 1.0).abs() < 1e-12);
        assert!(v.transform(&words("kidney")).is_empty());
        // idf of a term in 1 of 2 docs: ln(3/2) + 1
        let i = v.features().iter().position(|f| f == "lung").unwrap();
        assert!((v.idf()[i] - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_fit_rejected() {
        let docs: Vec<Vec<String>> = Vec::new();
        assert!(matches!(
            TfidfVectorizer::fit(&docs, NgramMode::Word, 10),
            Err(Error::EmptyVocabulary)
        ));
    }
}
