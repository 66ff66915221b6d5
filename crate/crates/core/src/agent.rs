//! Agent state machine and the placeholder grammar.
//!
//! A trajectory alternates between three stages. From `Reasoning` the model
//! either emits a `<query>` (moving to `Grounding`) or an `<answer>` (moving
//! to `Terminal`). From `Grounding` it emits `<evidence>` and returns to
//! `Reasoning`. `Terminal` absorbs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::Document;

/// Payload emitted when the grounding step finds nothing relevant.
pub const NO_EVIDENCE: &str = "None";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Reasoning,
    Grounding,
    Terminal,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Reasoning => "reasoning",
            Stage::Grounding => "grounding",
            Stage::Terminal => "terminal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    #[serde(rename = "query")]
    QueryGeneration,
    #[serde(rename = "evidence")]
    EvidenceExtraction,
    #[serde(rename = "answer")]
    AnswerGeneration,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [
        ActionKind::QueryGeneration,
        ActionKind::EvidenceExtraction,
        ActionKind::AnswerGeneration,
    ];

    /// Placeholder tag name, e.g. `query` for `<query>…</query>`.
    pub fn tag(self) -> &'static str {
        match self {
            ActionKind::QueryGeneration => "query",
            ActionKind::EvidenceExtraction => "evidence",
            ActionKind::AnswerGeneration => "answer",
        }
    }

    /// One-letter code used in pair-type labels (`A`, `Q`, `E`).
    pub fn code(self) -> char {
        match self {
            ActionKind::QueryGeneration => 'Q',
            ActionKind::EvidenceExtraction => 'E',
            ActionKind::AnswerGeneration => 'A',
        }
    }

    pub fn from_code(c: char) -> Option<ActionKind> {
        ActionKind::ALL.into_iter().find(|k| k.code() == c)
    }

    pub fn is_legal_in(self, stage: Stage) -> bool {
        matches!(
            (stage, self),
            (Stage::Reasoning, ActionKind::QueryGeneration)
                | (Stage::Reasoning, ActionKind::AnswerGeneration)
                | (Stage::Grounding, ActionKind::EvidenceExtraction)
        )
    }

    /// Stage reached after taking this action.
    pub fn next_stage(self) -> Stage {
        match self {
            ActionKind::QueryGeneration => Stage::Grounding,
            ActionKind::EvidenceExtraction => Stage::Reasoning,
            ActionKind::AnswerGeneration => Stage::Terminal,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One parsed model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionStep {
    pub kind: ActionKind,
    pub raw_text: String,
    pub payload: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("malformed action for {stage} stage: {raw:?}")]
    MalformedAction { stage: Stage, raw: String },
    #[error("illegal transition: {kind} from {stage} stage")]
    IllegalTransition { stage: Stage, kind: ActionKind },
}

/// The search/inference state `(question, prior steps, stage)` plus the
/// documents awaiting grounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub question: String,
    pub steps: Vec<ActionStep>,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending_docs: Vec<Document>,
}

impl AgentState {
    pub fn new(question: impl Into<String>) -> Self {
        AgentState {
            question: question.into(),
            steps: Vec::new(),
            stage: Stage::Reasoning,
            pending_docs: Vec::new(),
        }
    }

    pub fn last_step(&self) -> Option<&ActionStep> {
        self.steps.last()
    }

    /// Payload of the most recent query step, if the state is waiting on
    /// retrieval results for it.
    pub fn pending_query(&self) -> Option<&str> {
        match self.last_step() {
            Some(step) if self.stage == Stage::Grounding => Some(step.payload.as_str()),
            _ => None,
        }
    }

    /// Final answer payload when the state is terminal.
    pub fn answer(&self) -> Option<&str> {
        match self.last_step() {
            Some(step) if step.kind == ActionKind::AnswerGeneration => Some(&step.payload),
            _ => None,
        }
    }

    /// Returns a copy with `docs` attached as the grounding context.
    pub fn with_docs(&self, docs: Vec<Document>) -> AgentState {
        let mut next = self.clone();
        next.pending_docs = docs;
        next
    }
}

/// Record of one inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub question: String,
    pub steps: Vec<ActionStep>,
    pub retrievals: Vec<Retrieval>,
    pub final_answer: Option<String>,
    pub rounds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub query: String,
    pub docs: Vec<Document>,
}

impl Transcript {
    pub fn new(question: impl Into<String>) -> Self {
        Transcript {
            question: question.into(),
            steps: Vec::new(),
            retrievals: Vec::new(),
            final_answer: None,
            rounds_used: 0,
        }
    }
}

struct TagHit {
    kind: ActionKind,
    closing: bool,
    start: usize,
    end: usize,
}

fn scan_tags(raw: &str) -> Vec<TagHit> {
    let mut hits = Vec::new();
    let mut pos = 0;
    while let Some(offset) = raw[pos..].find('<') {
        let start = pos + offset;
        let rest = &raw[start..];
        let mut matched = None;
        for kind in ActionKind::ALL {
            let tag = kind.tag();
            let open = format!("<{tag}>");
            let close = format!("</{tag}>");
            if rest.starts_with(&open) {
                matched = Some((kind, false, open.len()));
            } else if rest.starts_with(&close) {
                matched = Some((kind, true, close.len()));
            }
            if matched.is_some() {
                break;
            }
        }
        match matched {
            Some((kind, closing, len)) => {
                hits.push(TagHit {
                    kind,
                    closing,
                    start,
                    end: start + len,
                });
                pos = start + len;
            }
            None => pos = start + 1,
        }
    }
    hits
}

/// Parses one model response into an action legal for `stage`.
///
/// The first well-formed placeholder pair whose tag is legal for the stage
/// wins; anything after it is ignored. An opening tag directly followed by
/// any tag other than its own closing tag is malformed and skipped.
pub fn parse_action(raw: &str, stage: Stage) -> Result<ActionStep, AgentError> {
    let malformed = || AgentError::MalformedAction {
        stage,
        raw: raw.to_owned(),
    };
    let hits = scan_tags(raw);
    for (i, open) in hits.iter().enumerate() {
        if open.closing || !open.kind.is_legal_in(stage) {
            continue;
        }
        let Some(next) = hits.get(i + 1) else {
            break;
        };
        if !(next.closing && next.kind == open.kind) {
            continue;
        }
        let payload = raw[open.end..next.start].trim();
        if payload.is_empty() {
            continue;
        }
        return Ok(ActionStep {
            kind: open.kind,
            raw_text: raw.to_owned(),
            payload: payload.to_owned(),
            index: 0,
        });
    }
    Err(malformed())
}

/// Appends `step` to `state`, returning the successor state.
///
/// The step's index is rewritten to its trajectory position. Entering
/// `Grounding` leaves `pending_docs` empty until retrieval attaches them;
/// leaving it clears them.
pub fn transition(state: &AgentState, step: ActionStep) -> Result<AgentState, AgentError> {
    if !step.kind.is_legal_in(state.stage) {
        return Err(AgentError::IllegalTransition {
            stage: state.stage,
            kind: step.kind,
        });
    }
    let mut steps = state.steps.clone();
    let stage = step.kind.next_stage();
    steps.push(ActionStep {
        index: steps.len(),
        ..step
    });
    Ok(AgentState {
        question: state.question.clone(),
        steps,
        stage,
        pending_docs: Vec::new(),
    })
}

/// Serializes a state into prompt user content.
///
/// Layout: a `Question:` line, then (if any) a `Previous thoughts:` block
/// with each step's raw text on its own line, then (grounding only) a
/// `Documents:` block of `Doc k: title` headers followed by contents.
pub fn render_context(state: &AgentState) -> String {
    let mut out = format!("Question: {}\n", state.question);
    if !state.steps.is_empty() {
        out.push_str("\nPrevious thoughts:\n");
        for step in &state.steps {
            out.push_str(&step.raw_text);
            out.push('\n');
        }
    }
    if state.stage == Stage::Grounding && !state.pending_docs.is_empty() {
        out.push_str("\nDocuments:\n");
        for (k, doc) in state.pending_docs.iter().enumerate() {
            out.push_str(&format!("Doc {}: {}\n{}\n", k + 1, doc.title, doc.contents));
        }
    }
    out
}
