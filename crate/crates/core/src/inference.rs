//! The iterative reasoning/grounding loop used at inference time.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{transition, ActionKind, ActionStep, AgentState, Retrieval, Transcript};
use crate::policy::{generate_action, PolicyBackend, PolicyError, PolicyParams};
use crate::retrieval::{RetrievalError, Retriever, DEFAULT_TOP_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Policy-call budget; every query, evidence or answer emission uses one.
    pub max_rounds: usize,
    pub top_k: usize,
    /// Keep retrieved documents in the transcript; when false only the
    /// query strings are kept.
    pub record_transcript: bool,
    pub policy: PolicyParams,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            max_rounds: 10,
            top_k: DEFAULT_TOP_K,
            record_transcript: true,
            policy: PolicyParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("policy failure after {} rounds: {source}", partial.rounds_used)]
    PolicyFailure {
        #[source]
        source: PolicyError,
        partial: Box<Transcript>,
    },
    #[error("retrieval failure after {} rounds: {source}", partial.rounds_used)]
    RetrievalFailure {
        #[source]
        source: RetrievalError,
        partial: Box<Transcript>,
    },
}

impl InferenceError {
    /// Transcript accumulated before the failure, if any.
    pub fn partial(&self) -> Option<&Transcript> {
        match self {
            InferenceError::PolicyFailure { partial, .. }
            | InferenceError::RetrievalFailure { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Runs one question to an answer or until `cfg.max_rounds` policy calls.
pub fn run<B, R>(
    question: &str,
    backend: &B,
    retriever: &R,
    cfg: &InferenceConfig,
) -> Result<Transcript, InferenceError>
where
    B: PolicyBackend + ?Sized,
    R: Retriever + ?Sized,
{
    if question.trim().is_empty() {
        return Err(InferenceError::EmptyQuestion);
    }
    if cfg.max_rounds == 0 || cfg.top_k == 0 {
        return Err(InferenceError::InvalidConfig(
            "max_rounds and top_k must be >= 1".into(),
        ));
    }
    let mut transcript = Transcript::new(question);
    let mut state = AgentState::new(question);
    let mut round = 0;
    while round < cfg.max_rounds {
        let step = match generate_action(&state, backend, &cfg.policy) {
            Ok(step) => step,
            Err(source) => {
                return Err(InferenceError::PolicyFailure {
                    source,
                    partial: Box::new(transcript),
                })
            }
        };
        round += 1;
        transcript.rounds_used = round;
        let kind = step.kind;
        let payload = step.payload.clone();
        state = transition(&state, step).expect("generate_action yields stage-legal steps");
        transcript
            .steps
            .push(state.steps.last().cloned().expect("just pushed"));
        match kind {
            ActionKind::QueryGeneration => {
                let docs = match retriever.retrieve(&payload, cfg.top_k) {
                    Ok(docs) => docs,
                    Err(source) => {
                        return Err(InferenceError::RetrievalFailure {
                            source,
                            partial: Box::new(transcript),
                        })
                    }
                };
                transcript.retrievals.push(Retrieval {
                    query: payload,
                    docs: if cfg.record_transcript {
                        docs.clone()
                    } else {
                        Vec::new()
                    },
                });
                state = state.with_docs(docs);
            }
            ActionKind::AnswerGeneration => {
                transcript.final_answer = Some(payload);
                return Ok(transcript);
            }
            ActionKind::EvidenceExtraction => {}
        }
    }
    Ok(transcript)
}

/// Runs `questions` on up to `parallelism` worker threads. Results are in
/// input order; a failed question does not stop the others.
pub fn run_batch<B, R>(
    questions: &[String],
    backend: &B,
    retriever: &R,
    cfg: &InferenceConfig,
    parallelism: usize,
) -> Vec<Result<Transcript, InferenceError>>
where
    B: PolicyBackend + ?Sized,
    R: Retriever + ?Sized,
{
    crate::pool::parallel_map(questions, parallelism, |q| run(q, backend, retriever, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StepRecord {
    kind: ActionKind,
    raw_text: String,
    payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RetrievalRecord {
    query: String,
    doc_ids: Vec<String>,
}

/// Line format of the transcript JSONL export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub question: String,
    steps: Vec<StepRecord>,
    retrievals: Vec<RetrievalRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub rounds_used: usize,
}

impl TranscriptRecord {
    pub fn step_kinds(&self) -> Vec<ActionKind> {
        self.steps.iter().map(|s| s.kind).collect()
    }

    pub fn retrieval_count(&self) -> usize {
        self.retrievals.len()
    }

    /// Rebuilds the steps; indices are positions in the list.
    pub fn steps(&self) -> Vec<ActionStep> {
        self.steps
            .iter()
            .enumerate()
            .map(|(index, s)| ActionStep {
                kind: s.kind,
                raw_text: s.raw_text.clone(),
                payload: s.payload.clone(),
                index,
            })
            .collect()
    }
}

impl From<&Transcript> for TranscriptRecord {
    fn from(t: &Transcript) -> Self {
        TranscriptRecord {
            question: t.question.clone(),
            steps: t
                .steps
                .iter()
                .map(|s| StepRecord {
                    kind: s.kind,
                    raw_text: s.raw_text.clone(),
                    payload: s.payload.clone(),
                })
                .collect(),
            retrievals: t
                .retrievals
                .iter()
                .map(|r| RetrievalRecord {
                    query: r.query.clone(),
                    doc_ids: r.docs.iter().map(|d| d.id.clone()).collect(),
                })
                .collect(),
            final_answer: t.final_answer.clone(),
            rounds_used: t.rounds_used,
        }
    }
}

pub fn write_transcripts<W: Write>(mut out: W, transcripts: &[Transcript]) -> io::Result<()> {
    for t in transcripts {
        serde_json::to_writer(&mut out, &TranscriptRecord::from(t))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads transcript JSONL; errors carry the 1-based line number.
pub fn read_transcripts<R: BufRead>(input: R) -> Result<Vec<TranscriptRecord>, (usize, String)> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| (i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| (i + 1, e.to_string()))?);
    }
    Ok(records)
}
