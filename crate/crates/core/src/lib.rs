//! Bottom-up recognition and linking of concept mentions against a large,
//! sparsely-annotated ontology.
//!
//! The pipeline has three stages that are trained and run separately:
//!
//! 1. [`candgen`] enumerates every short token span of a sentence and retrieves
//!    the top lexical matches from the alias table with character and word
//!    n-gram TF-IDF similarity.
//! 2. [`linker`] reranks each span's matches with a small cross-encoder and
//!    turns the logits into a probability distribution over the candidates.
//! 3. [`selector`] scores each (span, linked entity, probability) triple and
//!    decides which spans are real mentions, either by thresholding or with a
//!    greedy non-overlapping sweep.
//!
//! None of the trained parameters are tied to individual entities, so a model
//! can be pointed at a different alias table without retraining.

pub mod binio;
pub mod candgen;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod kb;
pub mod linker;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod selector;
pub mod synth;
pub mod text;

pub use config::PipelineConfig;
pub use error::{Error, Result};
