//! In-memory BM25 inverted index.
//!
//! ```text
//! score(D,Q) = Σ IDF(t) · f(t,D)·(k1+1) / (f(t,D) + k1·(1 − b + b·|D|/avgdl))
//! IDF(t)     = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Documents are tokenized with [`crate::text::normalize`] over
//! `title + " " + contents`. Query terms are deduplicated.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Document, RetrievalError, Retriever};
use crate::text::normalize;

/// Format tag written into index cache files.
pub const INDEX_FORMAT: &str = "steprag-bm25-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the document in ingestion order.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    format: String,
    source_digest: String,
    params: Bm25Params,
    documents: Vec<Document>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Deserialize)]
struct CorpusLine {
    id: Option<serde_json::Value>,
    #[serde(default)]
    title: Option<String>,
    contents: Option<String>,
}

fn digest_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl CorpusIndex {
    /// Reads a JSONL corpus file and indexes it.
    pub fn ingest(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_jsonl_bytes(&bytes)
    }

    pub fn from_jsonl_bytes(bytes: &[u8]) -> Result<Self, RetrievalError> {
        let text = std::str::from_utf8(bytes).map_err(|e| RetrievalError::CorpusFormat {
            line: 0,
            reason: format!("not UTF-8: {e}"),
        })?;
        let mut docs = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine =
                serde_json::from_str(line).map_err(|e| RetrievalError::CorpusFormat {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            let id = match parsed.id {
                Some(serde_json::Value::String(s)) if !s.is_empty() => s,
                _ => {
                    return Err(RetrievalError::CorpusFormat {
                        line: line_no,
                        reason: "missing or non-string id".into(),
                    })
                }
            };
            let contents = parsed.contents.unwrap_or_default();
            if contents.trim().is_empty() {
                return Err(RetrievalError::CorpusFormat {
                    line: line_no,
                    reason: "empty contents".into(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateDocId { line: line_no, id });
            }
            docs.push(Document::new(
                id,
                parsed.title.unwrap_or_default(),
                contents,
            ));
        }
        if docs.is_empty() {
            return Err(RetrievalError::CorpusFormat {
                line: 0,
                reason: "corpus has no documents".into(),
            });
        }
        let mut index = Self::build(docs, Bm25Params::default());
        index.source_digest = digest_hex(bytes);
        Ok(index)
    }

    /// Indexes documents already in memory. Ids must be unique.
    pub fn build(documents: Vec<Document>, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(documents.len());
        for (doc_idx, doc) in documents.iter().enumerate() {
            let tokens = normalize(&format!("{} {}", doc.title, doc.contents));
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for tok in tokens {
                *tf.entry(tok).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    doc: doc_idx as u32,
                    tf: count,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if documents.is_empty() {
            0.0
        } else {
            total as f64 / documents.len() as f64
        };
        CorpusIndex {
            format: INDEX_FORMAT.to_owned(),
            source_digest: String::new(),
            params,
            documents,
            doc_lengths,
            avg_doc_length,
            postings,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn doc_length(&self, id: &str) -> Option<usize> {
        self.documents
            .iter()
            .position(|d| d.id == id)
            .map(|i| self.doc_lengths[i] as usize)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Digest of the corpus bytes this index was built from.
    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.documents.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Ranks documents for `query`; ties break on ascending id.
    pub fn search(&self, query: &str, k: usize) -> Vec<Document> {
        if k == 0 {
            return Vec::new();
        }
        let Bm25Params { k1, b } = self.params;
        let avgdl = if self.avg_doc_length > 0.0 {
            self.avg_doc_length
        } else {
            1.0
        };
        let mut terms = normalize(query);
        terms.sort();
        terms.dedup();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for p in postings {
                let tf = p.tf as f64;
                let dl = self.doc_lengths[p.doc as usize] as f64;
                let denom = tf + k1 * (1.0 - b + b * dl / avgdl);
                *scores.entry(p.doc).or_default() += idf * tf * (k1 + 1.0) / denom;
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1).then_with(|| {
                self.documents[a.0 as usize]
                    .id
                    .cmp(&self.documents[b.0 as usize].id)
            })
        });
        ranked
            .into_iter()
            .take(k)
            .map(|(doc, score)| {
                let mut d = self.documents[doc as usize].clone();
                d.score = score;
                d
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("index serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let index: CorpusIndex =
            serde_json::from_slice(&bytes).map_err(|e| RetrievalError::Cache(e.to_string()))?;
        if index.format != INDEX_FORMAT {
            return Err(RetrievalError::Cache(format!(
                "unsupported index format {:?}",
                index.format
            )));
        }
        Ok(index)
    }

    /// Loads `cache` if it was built from the current bytes of `corpus`,
    /// otherwise re-ingests and rewrites the cache.
    pub fn load_or_build(
        corpus: impl AsRef<Path>,
        cache: impl AsRef<Path>,
    ) -> Result<Self, RetrievalError> {
        let corpus = corpus.as_ref();
        let cache = cache.as_ref();
        let bytes = fs::read(corpus).map_err(|source| RetrievalError::Io {
            path: corpus.display().to_string(),
            source,
        })?;
        let digest = digest_hex(&bytes);
        if let Ok(index) = Self::load(cache) {
            if index.source_digest == digest {
                return Ok(index);
            }
            log::info!("index cache {} is stale, rebuilding", cache.display());
        }
        let index = Self::from_jsonl_bytes(&bytes)?;
        index.save(cache)?;
        Ok(index)
    }
}

impl Retriever for CorpusIndex {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, RetrievalError> {
        Ok(self.search(query, k))
    }
}
