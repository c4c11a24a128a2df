//! Skipgram (negative sampling) pretraining of code embeddings.

mod skipgram;
mod vocab;

pub use skipgram::{
    load_embeddings, nearest, save_embeddings, sgns_loss_grad, skipgram_pairs, train_skipgram, EmbeddingTable,
    SgnsLossGrad, SkipgramConfig, SkipgramOutput,
};
pub use vocab::{build_vocab, CodeVocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
