//! Chat-completion client.
//!
//! Sends `{model, messages: [system, user], temperature, max_tokens, seed?}`
//! and reads `choices[0].message.content`. Transient failures (connection
//! errors, timeouts, HTTP 429 and 5xx) are retried with exponential backoff;
//! HTTP 401/403 fail immediately.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, PolicyBackend, PolicyRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_token: Option<String>,
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    pub max_retries: usize,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: String::new(),
            api_token: None,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_base_ms: 500,
            max_in_flight: 8,
        }
    }
}

/// Per-call transport outcome, kept for inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpCallRecord {
    pub retries: usize,
    pub ok: bool,
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
    log: Mutex<Vec<HttpCallRecord>>,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Fatal(BackendError),
    Transient(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let cap = config.max_in_flight.max(1);
        Ok(HttpBackend {
            config,
            client,
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                cap,
            },
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn calls(&self) -> Vec<HttpCallRecord> {
        self.log.lock().expect("call log poisoned").clone()
    }

    /// JSON body for `request`.
    pub fn body(&self, request: &PolicyRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let mut builder = self.client.post(&self.config.endpoint).json(body);
        if let Some(token) = &self.config.api_token {
            builder = builder.bearer_auth(token);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Transient(BackendError::Timeout(e.to_string()))
            }
            Err(e) => return Attempt::Transient(BackendError::Unavailable(e.to_string())),
        };
        let status = response.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Fatal(BackendError::AuthFailure(format!("HTTP {status}")));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Transient(BackendError::Unavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Attempt::Fatal(BackendError::Unavailable(format!("HTTP {status}")));
        }
        let text = match response.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Attempt::Transient(BackendError::Timeout(e.to_string()))
            }
            Err(e) => return Attempt::Transient(BackendError::Unavailable(e.to_string())),
        };
        match serde_json::from_str::<Completion>(&text) {
            Ok(c) => match c
                .choices
                .into_iter()
                .next()
                .and_then(|ch| ch.message.content)
            {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fatal(BackendError::Unavailable(
                    "completion has no content".into(),
                )),
            },
            Err(e) => Attempt::Fatal(BackendError::Unavailable(format!(
                "bad completion body: {e}"
            ))),
        }
    }
}

impl PolicyBackend for HttpBackend {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let _slot = self.gate.acquire();
        let body = self.body(request);
        let mut retries = 0;
        let result = loop {
            match self.attempt(&body) {
                Attempt::Done(reply) => break Ok(reply),
                Attempt::Fatal(err) => break Err(err),
                Attempt::Transient(err) => {
                    if retries >= self.config.max_retries {
                        break Err(err);
                    }
                    let delay = self
                        .config
                        .backoff_base_ms
                        .saturating_mul(1 << retries.min(16));
                    log::warn!("transient backend failure ({err}); retrying in {delay} ms");
                    thread::sleep(Duration::from_millis(delay));
                    retries += 1;
                }
            }
        };
        self.log
            .lock()
            .expect("call log poisoned")
            .push(HttpCallRecord {
                retries,
                ok: result.is_ok(),
            });
        result
    }
}
