//! Document similarity over patent-style corpora.
//!
//! The pipeline runs corpus ingest, text preprocessing (stemming, stopword
//! and rare-term removal), optional noun-phrase extraction, one of several
//! vectorization methods (TFIDF variants, latent semantic indexing, doc2vec),
//! cosine scoring of document pairs, and ROC/AUC evaluation against a
//! benchmark of known-similar pairs. A Gaussian-process tuner searches the
//! hyper-parameter spaces of the trainable methods.
//!
//! Heavy per-document loops run on rayon when the `parallel` feature
//! (default) is enabled and fall back to sequential iteration otherwise; see
//! [`exec`].

pub mod corpus;
pub mod d2v;
pub mod eval;
pub mod exec;
pub mod lsi;
pub mod phrases;
pub mod preprocess;
pub mod seeding;
pub mod store;
pub mod tfidf;
pub mod tune;
pub mod vectors;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SimvecError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {msg}")]
    Corpus { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("unknown document id: {0}")]
    UnknownDoc(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("model: {0}")]
    Model(String),
    #[error("store: {0}")]
    Store(String),
}

pub type Result<T> = std::result::Result<T, SimvecError>;
