//! Neural scorer over collapsed sequences: char-CNN word features, a word
//! LSTM and a word CNN, joined by a sigmoid head.

mod embeddings;
mod model;
mod vocab;

use thiserror::Error;

pub use embeddings::{init_embeddings, oov_bound, Embeddings};
pub use model::{Forward, Reranker, RerankerConfig};
pub use vocab::{Vocab, PAD, PAD_CHAR, UNK, UNK_CHAR};

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum RerankerError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("embedding file, line {line}: {message}")]
    Embedding { line: usize, message: String },
    #[error("embedding file, line {line}: expected dimension {expected}, found {found}")]
    EmbeddingDim { line: usize, expected: usize, found: usize },
    #[error("parameter `{name}`: expected shape {expected:?}, found {found:?}")]
    Dimension { name: String, expected: Vec<usize>, found: Option<Vec<usize>> },
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("reranker config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
