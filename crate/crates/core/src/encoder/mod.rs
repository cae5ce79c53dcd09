//! A small self-attention cross-encoder trained from scratch.

mod checkpoint;
mod gradcheck;
mod input;
mod model;
mod params;
pub mod tensor;
mod vocab;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, TensorCheck};
pub use input::{build_cross_input, CrossInput, DocPieces};
pub(crate) use model::two_mut;
pub use model::{Encoder, EncoderCache, EncoderConfig};
pub use params::{Init, Params};
pub use tensor::{Mat, Real};
pub use vocab::{Vocabulary, CLS, PAD, SEP, UNK};
