//! Document retrieval: a local BM25 index and a remote HTTP adapter.

mod bm25;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{Bm25Params, CorpusIndex, Posting, INDEX_FORMAT};
pub use remote::{RemoteRetriever, RemoteRetrieverConfig};

/// Top-k used when nothing else is configured.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub contents: String,
    #[serde(default)]
    pub score: f64,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        contents: impl Into<String>,
    ) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            contents: contents.into(),
            score: 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus format error at line {line}: {reason}")]
    CorpusFormat { line: usize, reason: String },
    #[error("duplicate document id {id:?} at line {line}")]
    DuplicateDocId { line: usize, id: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index cache error: {0}")]
    Cache(String),
    #[error("retrieval backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed retrieval reply: {0}")]
    MalformedRetrievalReply(String),
}

/// Anything that maps a query to a ranked list of at most `k` documents.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, RetrievalError>;
}

impl<R: Retriever + ?Sized> Retriever for &R {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, RetrievalError> {
        (**self).retrieve(query, k)
    }
}

impl<R: Retriever + ?Sized> Retriever for Box<R> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, RetrievalError> {
        (**self).retrieve(query, k)
    }
}

impl<R: Retriever + ?Sized> Retriever for std::sync::Arc<R> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, RetrievalError> {
        (**self).retrieve(query, k)
    }
}
