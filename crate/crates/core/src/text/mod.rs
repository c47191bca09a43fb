//! Vocabulary, document structuring and embedding training.

mod embeddings;
mod skipgram;
mod structure;
mod vocab;

pub use embeddings::{load_vectors, save_vectors, EmbeddingTable, LabelEmbeddings};
pub use skipgram::{label_space_of, train_label_embeddings, train_skipgram, SkipGramConfig};
pub use structure::{
    chunk_tokens, structure_document, structure_ids, TokenizedDocument, DEFAULT_MAX_SENTENCES,
    DEFAULT_MAX_TOKENS,
};
pub use vocab::{Vocabulary, PAD, PAD_ID, UNK, UNK_ID};
