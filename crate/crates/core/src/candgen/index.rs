//! Exact inverted index over alias TF-IDF vectors.
//!
//! Scores are accumulated feature by feature in increasing feature id, the
//! same order [`SparseVec::dot`] uses, so indexed and brute-force scores are
//! bit-identical.

use std::cell::RefCell;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tfidf::{Lemmatizer, NgramMode, SparseVec, TfidfVectorizer};
use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::io;

const VECTORIZER_MAGIC: &[u8; 4] = b"OLTV";
const INDEX_MAGIC: &[u8; 4] = b"OLIX";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexParams {
    pub char_ngram_min: usize,
    pub char_ngram_max: usize,
    pub max_features: usize,
    pub lemmatize: bool,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            char_ngram_min: 2,
            char_ngram_max: 5,
            max_features: 200_000,
            lemmatize: true,
        }
    }
}

/// The pair of fitted vectorizers plus the lemmatizer they expect.
#[derive(Clone, Debug)]
pub struct Vectorizers {
    pub lemmatizer: Lemmatizer,
    pub char: TfidfVectorizer,
    pub word: TfidfVectorizer,
}

/// Char and word vectors of one string.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryVec {
    pub char: SparseVec,
    pub word: SparseVec,
}

impl Vectorizers {
    /// Fit both vectorizers on lemmatized alias names.
    pub fn fit<S: AsRef<str>>(names: &[S], params: &IndexParams) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptyAliasTable("no alias names to fit on".into()));
        }
        let lemmatizer = Lemmatizer {
            enabled: params.lemmatize,
        };
        let docs: Vec<Vec<String>> = names.iter().map(|n| lemmatizer.words(n.as_ref())).collect();
        let mode = NgramMode::Char {
            min: params.char_ngram_min,
            max: params.char_ngram_max,
        };
        Ok(Self {
            lemmatizer,
            char: TfidfVectorizer::fit(&docs, mode, params.max_features)?,
            word: TfidfVectorizer::fit(&docs, NgramMode::Word, params.max_features)?,
        })
    }

    pub fn vectorize(&self, text: &str) -> QueryVec {
        let words = self.lemmatizer.words(text);
        QueryVec {
            char: self.char.transform(&words),
            word: self.word.transform(&words),
        }
    }

    fn write_to<W: std::io::Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.u32(self.lemmatizer.enabled as u32)?;
        self.char.write(w)?;
        self.word.write(w)
    }

    fn read_from<R: std::io::Read>(r: &mut BinReader<R>) -> Result<Self> {
        let lemmatizer = Lemmatizer {
            enabled: r.u32()? != 0,
        };
        Ok(Self {
            lemmatizer,
            char: TfidfVectorizer::read(r)?,
            word: TfidfVectorizer::read(r)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(io::create(path)?, VECTORIZER_MAGIC, VERSION)?;
        self.write_to(&mut w)?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(io::open(path)?, VECTORIZER_MAGIC, VERSION, "vectorizers")?;
        let v = Self::read_from(&mut r)?;
        r.expect_end()?;
        Ok(v)
    }
}

/// `(c + k_w * w) / (1 + k_w)`.
pub fn combine(cos_char: f64, cos_word: f64, k_w: f64) -> f64 {
    (cos_char + k_w * cos_word) / (1.0 + k_w)
}

/// Lexical similarity of two strings under fitted vectorizers.
pub fn lexical_similarity(v: &Vectorizers, m: &str, a: &str, k_w: f64) -> f64 {
    let (x, y) = (v.vectorize(m), v.vectorize(a));
    combine(x.char.dot(&y.char), x.word.dot(&y.word), k_w)
}

#[derive(Default)]
struct Scratch {
    char: Vec<f64>,
    word: Vec<f64>,
    touched: Vec<u32>,
    seen: Vec<bool>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

#[derive(Clone, Debug)]
pub struct AliasIndex {
    vectorizers: Vectorizers,
    char_vecs: Vec<SparseVec>,
    word_vecs: Vec<SparseVec>,
    char_postings: Vec<Vec<(u32, f64)>>,
    word_postings: Vec<Vec<(u32, f64)>>,
}

fn postings(vecs: &[SparseVec], features: usize) -> Vec<Vec<(u32, f64)>> {
    let mut lists = vec![Vec::new(); features];
    for (alias, v) in vecs.iter().enumerate() {
        for (&f, &x) in v.indices.iter().zip(&v.values) {
            lists[f as usize].push((alias as u32, x));
        }
    }
    lists
}

impl AliasIndex {
    /// Fit vectorizers on `names` and index every name.
    pub fn build<S: AsRef<str> + Sync>(names: &[S], params: &IndexParams) -> Result<Self> {
        let vectorizers = Vectorizers::fit(names, params)?;
        Ok(Self::with_vectorizers(vectorizers, names))
    }

    /// Index `names` under already fitted vectorizers.
    pub fn with_vectorizers<S: AsRef<str> + Sync>(vectorizers: Vectorizers, names: &[S]) -> Self {
        use rayon::prelude::*;
        let vecs: Vec<QueryVec> = names
            .par_iter()
            .map(|n| vectorizers.vectorize(n.as_ref()))
            .collect();
        let (char_vecs, word_vecs): (Vec<_>, Vec<_>) =
            vecs.into_iter().map(|q| (q.char, q.word)).unzip();
        Self::from_vectors(vectorizers, char_vecs, word_vecs)
    }

    fn from_vectors(
        vectorizers: Vectorizers,
        char_vecs: Vec<SparseVec>,
        word_vecs: Vec<SparseVec>,
    ) -> Self {
        let char_postings = postings(&char_vecs, vectorizers.char.len());
        let word_postings = postings(&word_vecs, vectorizers.word.len());
        Self {
            vectorizers,
            char_vecs,
            word_vecs,
            char_postings,
            word_postings,
        }
    }

    pub fn vectorizers(&self) -> &Vectorizers {
        &self.vectorizers
    }

    pub fn len(&self) -> usize {
        self.char_vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.char_vecs.is_empty()
    }

    pub fn vectorize(&self, text: &str) -> QueryVec {
        self.vectorizers.vectorize(text)
    }

    /// `(alias index, S_M)` for every alias with positive score, in alias order.
    pub fn scores(&self, q: &QueryVec, k_w: f64) -> Vec<(u32, f64)> {
        SCRATCH.with(|cell| {
            let mut s = cell.borrow_mut();
            let n = self.len();
            if s.char.len() != n {
                s.char = vec![0.0; n];
                s.word = vec![0.0; n];
                s.seen = vec![false; n];
            }
            let Scratch {
                char,
                word,
                touched,
                seen,
            } = &mut *s;
            let mut accumulate = |acc: &mut Vec<f64>, lists: &[Vec<(u32, f64)>], v: &SparseVec| {
                for (&f, &x) in v.indices.iter().zip(&v.values) {
                    for &(alias, y) in &lists[f as usize] {
                        acc[alias as usize] += x * y;
                        if !seen[alias as usize] {
                            seen[alias as usize] = true;
                            touched.push(alias);
                        }
                    }
                }
            };
            accumulate(char, &self.char_postings, &q.char);
            accumulate(word, &self.word_postings, &q.word);

            touched.sort_unstable();
            let mut out = Vec::with_capacity(touched.len());
            for &a in touched.iter() {
                let i = a as usize;
                let score = combine(char[i], word[i], k_w);
                if score > 0.0 {
                    out.push((a, score));
                }
                char[i] = 0.0;
                word[i] = 0.0;
                seen[i] = false;
            }
            touched.clear();
            out
        })
    }

    /// Reference scorer: a dot product against every alias.
    pub fn brute_force_scores(&self, q: &QueryVec, k_w: f64) -> Vec<(u32, f64)> {
        self.char_vecs
            .iter()
            .zip(&self.word_vecs)
            .enumerate()
            .filter_map(|(i, (c, w))| {
                let score = combine(q.char.dot(c), q.word.dot(w), k_w);
                (score > 0.0).then_some((i as u32, score))
            })
            .collect()
    }

    /// Write vectorizers and alias vectors. Postings are rebuilt on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(io::create(path)?, INDEX_MAGIC, VERSION)?;
        self.vectorizers.write_to(&mut w)?;
        w.u64(self.len() as u64)?;
        for v in self.char_vecs.iter().chain(&self.word_vecs) {
            w.u64(v.indices.len() as u64)?;
            for &i in &v.indices {
                w.u32(i)?;
            }
            w.f64s(&v.values)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(io::open(path)?, INDEX_MAGIC, VERSION, "index")?;
        let vectorizers = Vectorizers::read_from(&mut r)?;
        let n = r.read_len()?;
        let mut read_vecs = |limit: usize| -> Result<Vec<SparseVec>> {
            let mut vecs = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                let nnz = r.read_len()?;
                let mut indices = Vec::with_capacity(nnz.min(1 << 16));
                for _ in 0..nnz {
                    let i = r.u32()?;
                    if i as usize >= limit {
                        return Err(Error::format("index", format!("feature {i} out of range")));
                    }
                    indices.push(i);
                }
                let values = r.f64s()?;
                if values.len() != nnz {
                    return Err(Error::format("index", "vector length mismatch"));
                }
                vecs.push(SparseVec { indices, values });
            }
            Ok(vecs)
        };
        let char_vecs = read_vecs(vectorizers.char.len())?;
        let word_vecs = read_vecs(vectorizers.word.len())?;
        r.expect_end()?;
        Ok(Self::from_vectors(vectorizers, char_vecs, word_vecs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> AliasIndex {
        AliasIndex::build(&["heart", "heart attack", "lung"], &IndexParams::default()).unwrap()
    }

    #[test]
    fn identity_and_orthogonality() {
        let idx = toy();
        let v = idx.vectorizers();
        assert!((lexical_similarity(v, "heart attack", "heart attack", 0.5) - 1.0).abs() < 1e-12);
        assert_eq!(lexical_similarity(v, "heart", "lung", 0.5), 0.0);
        let a = lexical_similarity(v, "hert attack", "heart", 0.5);
        let b = lexical_similarity(v, "heart", "hert attack", 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn indexed_equals_brute_force() {
        let idx = toy();
        for q in ["hert attack", "lungs", "heart", "xyz", ""] {
            let qv = idx.vectorize(q);
            assert_eq!(idx.scores(&qv, 0.5), idx.brute_force_scores(&qv, 0.5));
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let idx = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        idx.save(&path).unwrap();
        let back = AliasIndex::load(&path).unwrap();
        let q = idx.vectorize("hert attack");
        assert_eq!(back.scores(&q, 0.5), idx.scores(&q, 0.5));
        assert_eq!(
            back.vectorizers().char.features(),
            idx.vectorizers().char.features()
        );

        let vpath = dir.path().join("vec.bin");
        idx.vectorizers().save(&vpath).unwrap();
        let v = Vectorizers::load(&vpath).unwrap();
        assert_eq!(v.word.idf(), idx.vectorizers().word.idf());

        std::fs::write(&path, b"OLIX").unwrap();
        assert!(AliasIndex::load(&path).is_err());
    }

    #[test]
    fn empty_names_rejected() {
        let names: [&str; 0] = [];
        assert!(matches!(
            AliasIndex::build(&names, &IndexParams::default()),
            Err(Error::EmptyAliasTable(_))
        ));
    }
}
