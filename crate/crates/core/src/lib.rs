//! Segmentation-free compositional character n-gram embeddings.
//!
//! Trains embeddings for the most frequent character n-grams of a raw,
//! unsegmented corpus — no word segmenter, no dictionaries — and represents
//! any string, from a single word to a whole sentence, as the sum of the
//! embeddings of its in-vocabulary sub-n-grams.
//!
//! The pipeline: [`corpus`] ingests raw text into an indexed character
//! sequence, [`vocab`] counts n-grams and keeps the top `M`, [`lattice`]
//! enumerates target spans with their sub-n-grams and adjacent contexts,
//! [`trainer`] fits the embeddings by SGD with negative sampling, [`model`]
//! composes and persists vectors, and [`eval`] scores them on similarity
//! and classification tasks.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod lattice;
pub mod model;
pub mod trainer;
pub mod tsv;
pub mod vocab;

pub use corpus::{BoundaryMode, BoundaryPolicy, Corpus};
pub use error::{Error, Result};
pub use lattice::Span;
pub use model::{Composed, EmbeddingModel, ModelFormat, ModelHeader};
pub use trainer::{train, Mode, TrainConfig, TrainReport};
pub use vocab::{build_vocab, count_ngrams, NegSampler, Vocab};
