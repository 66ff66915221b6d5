//! Deterministic backends for tests and offline runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, PolicyBackend, PolicyRequest, TemplateName};

/// Request key: template name plus a digest of the whitespace-collapsed
/// user content.
pub fn fingerprint(template: TemplateName, user: &str) -> String {
    let collapsed = user.split_whitespace().collect::<Vec<_>>().join(" ");
    let digest = Sha256::digest(collapsed.as_bytes());
    let hex: String = digest.iter().take(16).map(|b| format!("{b:02x}")).collect();
    format!("{template}:{hex}")
}

/// One request observed by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCall {
    pub template: TemplateName,
    pub fingerprint: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub reply: Option<String>,
}

impl RecordedCall {
    fn new(request: &PolicyRequest, reply: Option<String>) -> Self {
        RecordedCall {
            template: request.template,
            fingerprint: fingerprint(request.template, &request.user),
            system: request.system.clone(),
            user: request.user.clone(),
            temperature: request.temperature,
            reply,
        }
    }
}

/// One line of a script file. Either `user` or `fingerprint` identifies the
/// request; `replies` are served in order on successive matching calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub template: TemplateName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub replies: Vec<String>,
}

impl ScriptEntry {
    fn key(&self) -> Result<String, String> {
        match (&self.fingerprint, &self.user) {
            (Some(fp), _) => Ok(fp.clone()),
            (None, Some(user)) => Ok(fingerprint(self.template, user)),
            (None, None) => Err("script entry needs `user` or `fingerprint`".into()),
        }
    }
}

/// Replies from a fingerprint table.
///
/// Each fingerprint maps to a list of replies; the n-th call with that
/// fingerprint gets reply `n mod len`. A single-reply entry therefore always
/// answers identically. Unknown fingerprints get the default reply unless
/// the backend is strict or has no default, in which case the call fails
/// with [`BackendError::UnscriptedRequest`].
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    default_reply: Option<String>,
    strict: bool,
    log: Mutex<Vec<RecordedCall>>,
}

impl ScriptedBackend {
    pub fn new(strict: bool) -> Self {
        ScriptedBackend {
            strict,
            ..Default::default()
        }
    }

    pub fn with_default_reply(mut self, reply: impl Into<String>) -> Self {
        self.default_reply = Some(reply.into());
        self
    }

    pub fn with_reply<I, S>(mut self, template: TemplateName, user: &str, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.entries
            .entry(fingerprint(template, user))
            .or_default()
            .extend(replies.into_iter().map(Into::into));
        self
    }

    pub fn with_entry(mut self, entry: ScriptEntry) -> Result<Self, String> {
        let key = entry.key()?;
        self.entries.entry(key).or_default().extend(entry.replies);
        Ok(self)
    }

    /// Loads a JSONL script, one [`ScriptEntry`] per line.
    pub fn from_script_file(path: impl AsRef<Path>, strict: bool) -> Result<Self, String> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut backend = ScriptedBackend::new(strict);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
            backend = backend
                .with_entry(entry)
                .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        }
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every request seen so far, in call order.
    pub fn calls(&self) -> Vec<RecordedCall> {
        self.log.lock().expect("call log poisoned").clone()
    }
}

impl PolicyBackend for ScriptedBackend {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let key = fingerprint(request.template, &request.user);
        let reply = match self.entries.get(&key).filter(|r| !r.is_empty()) {
            Some(replies) => {
                let mut cursors = self.cursors.lock().expect("cursor table poisoned");
                let cursor = cursors.entry(key.clone()).or_default();
                let reply = replies[*cursor % replies.len()].clone();
                *cursor += 1;
                Ok(reply)
            }
            None => match (&self.default_reply, self.strict) {
                (Some(default), false) => Ok(default.clone()),
                _ => Err(BackendError::UnscriptedRequest {
                    template: request.template,
                    fingerprint: key,
                }),
            },
        };
        self.log
            .lock()
            .expect("call log poisoned")
            .push(RecordedCall::new(request, reply.as_ref().ok().cloned()));
        reply
    }
}

/// Adapts a closure into a backend.
pub struct ClosureBackend<F>(F);

impl<F> ClosureBackend<F>
where
    F: Fn(&PolicyRequest) -> Result<String, BackendError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        ClosureBackend(f)
    }
}

impl<F> PolicyBackend for ClosureBackend<F>
where
    F: Fn(&PolicyRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        (self.0)(request)
    }
}

/// Wraps another backend and records each successful exchange so it can be
/// replayed later through a [`ScriptedBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<RecordedCall>>,
}

impl<B: PolicyBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.log.lock().expect("call log poisoned").clone()
    }

    /// Script entries grouped by fingerprint, replies in call order.
    /// Entries are ordered by fingerprint so the output is stable.
    pub fn script(&self) -> Vec<ScriptEntry> {
        let mut grouped: BTreeMap<String, ScriptEntry> = BTreeMap::new();
        for call in self.log.lock().expect("call log poisoned").iter() {
            let Some(reply) = &call.reply else { continue };
            grouped
                .entry(call.fingerprint.clone())
                .or_insert_with(|| ScriptEntry {
                    template: call.template,
                    user: Some(call.user.clone()),
                    fingerprint: None,
                    replies: Vec::new(),
                })
                .replies
                .push(reply.clone());
        }
        grouped.into_values().collect()
    }

    pub fn write_script(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for entry in self.script() {
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

impl<B: PolicyBackend> PolicyBackend for RecordingBackend<B> {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let reply = self.inner.complete(request);
        self.log
            .lock()
            .expect("call log poisoned")
            .push(RecordedCall::new(request, reply.as_ref().ok().cloned()));
        reply
    }
}
