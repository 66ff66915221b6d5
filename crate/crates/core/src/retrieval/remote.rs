use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Document, RetrievalError, Retriever};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRetrieverConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    30.0
}

/// Client for a retrieval service speaking
/// `POST {query, top_k}` → `{docs: [{id, title, contents, score}]}`.
pub struct RemoteRetriever {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct RetrieveRequest<'a> {
    query: &'a str,
    top_k: usize,
}

#[derive(Deserialize)]
struct RetrieveReply {
    docs: Vec<Document>,
}

impl RemoteRetriever {
    pub fn new(config: &RemoteRetrieverConfig) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        Ok(RemoteRetriever {
            endpoint: config.endpoint.clone(),
            client,
        })
    }
}

impl Retriever for RemoteRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Document>, RetrievalError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&RetrieveRequest { query, top_k: k })
            .send()
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(RetrievalError::BackendUnavailable(format!("HTTP {status}")));
        }
        let body = response
            .text()
            .map_err(|e| RetrievalError::BackendUnavailable(e.to_string()))?;
        let reply: RetrieveReply = serde_json::from_str(&body)
            .map_err(|e| RetrievalError::MalformedRetrievalReply(e.to_string()))?;
        for doc in &reply.docs {
            if doc.id.is_empty() {
                return Err(RetrievalError::MalformedRetrievalReply(
                    "document without id".into(),
                ));
            }
            if doc.contents.trim().is_empty() {
                return Err(RetrievalError::MalformedRetrievalReply(format!(
                    "document {:?} has empty contents",
                    doc.id
                )));
            }
        }
        let mut docs = reply.docs;
        docs.truncate(k);
        Ok(docs)
    }
}
