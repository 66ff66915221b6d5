//! Stage-conditioned policy calls and the process judge.
//!
//! A [`PolicyBackend`] maps a (system, user) prompt pair to reply text. The
//! reasoning stage is prompted with the trajectory so far; the grounding
//! stage additionally sees the retrieved documents.

mod http;
mod scripted;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{parse_action, render_context, ActionStep, AgentError, AgentState, Stage};

pub use http::{HttpBackend, HttpBackendConfig, HttpCallRecord};
pub use scripted::{
    fingerprint, ClosureBackend, RecordedCall, RecordingBackend, ScriptEntry, ScriptedBackend,
};
pub use templates::{PromptTemplate, TemplateName, ANSWER_FORMAT_SLOT, DEFAULT_ANSWER_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub template: TemplateName,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("no scripted reply for {template} request {fingerprint}")]
    UnscriptedRequest {
        template: TemplateName,
        fingerprint: String,
    },
}

pub trait PolicyBackend: Send + Sync {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError>;
}

impl<B: PolicyBackend + ?Sized> PolicyBackend for &B {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: PolicyBackend + ?Sized> PolicyBackend for Box<B> {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: PolicyBackend + ?Sized> PolicyBackend for std::sync::Arc<B> {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("malformed action after {attempts} attempts: {raw:?}")]
    MalformedAction { raw: String, attempts: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("judge reply has no parsable score: {reply:?}")]
    UnparsableScore { reply: String },
    #[error("cannot act from {0} stage")]
    InvalidStage(Stage),
}

/// Sampling knobs shared by policy and judge calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub judge_max_output_tokens: u32,
    pub seed: Option<u64>,
    pub answer_format: String,
    /// Extra attempts after a malformed reply.
    pub malformed_retries: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            temperature: 0.7,
            max_output_tokens: 512,
            judge_max_output_tokens: 512,
            seed: None,
            answer_format: DEFAULT_ANSWER_FORMAT.to_owned(),
            malformed_retries: 2,
        }
    }
}

/// Builds the stage-conditioned request for `state`.
pub fn action_request(
    state: &AgentState,
    params: &PolicyParams,
) -> Result<PolicyRequest, PolicyError> {
    let template = match state.stage {
        Stage::Reasoning => PromptTemplate::reasoning(params.answer_format.clone()),
        Stage::Grounding => PromptTemplate::grounding(),
        Stage::Terminal => return Err(PolicyError::InvalidStage(Stage::Terminal)),
    };
    Ok(PolicyRequest {
        template: template.name,
        system: template.system_prompt(),
        user: render_context(state),
        temperature: params.temperature,
        max_output_tokens: params.max_output_tokens,
        seed: params.seed,
    })
}

/// Samples the next action for `state`, retrying malformed replies up to
/// `params.malformed_retries` times.
pub fn generate_action<B: PolicyBackend + ?Sized>(
    state: &AgentState,
    backend: &B,
    params: &PolicyParams,
) -> Result<ActionStep, PolicyError> {
    let request = action_request(state, params)?;
    let attempts = params.malformed_retries + 1;
    let mut last_raw = String::new();
    for attempt in 0..attempts {
        let reply = backend.complete(&request)?;
        match parse_action(&reply, state.stage) {
            Ok(mut step) => {
                step.index = state.steps.len();
                return Ok(step);
            }
            Err(AgentError::MalformedAction { raw, .. }) => {
                log::debug!("malformed reply on attempt {}: {raw:?}", attempt + 1);
                last_raw = raw;
            }
            Err(other) => unreachable!("parse_action only reports malformed input: {other}"),
        }
    }
    Err(PolicyError::MalformedAction {
        raw: last_raw,
        attempts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub value: f64,
    pub raw_reply: String,
}

/// User content for a judge call: the trajectory plus the gold answers.
pub fn judge_user_content(state: &AgentState, golden_answers: &[String]) -> String {
    format!(
        "{}\nGolden answers: {}\n",
        render_context(state),
        golden_answers.join(" | ")
    )
}

pub fn judge_request(
    state: &AgentState,
    golden_answers: &[String],
    params: &PolicyParams,
) -> PolicyRequest {
    let template = PromptTemplate::process_evaluation();
    PolicyRequest {
        template: template.name,
        system: template.system_prompt(),
        user: judge_user_content(state, golden_answers),
        temperature: 0.0,
        max_output_tokens: params.judge_max_output_tokens,
        seed: params.seed,
    }
}

/// Scores a partial trajectory against the gold answers with the judge
/// template. Always sampled at temperature 0.
pub fn judge_evaluate<B: PolicyBackend + ?Sized>(
    state: &AgentState,
    golden_answers: &[String],
    backend: &B,
    params: &PolicyParams,
) -> Result<JudgeScore, PolicyError> {
    let request = judge_request(state, golden_answers, params);
    let reply = backend.complete(&request)?;
    let value = parse_judge_score(&reply).ok_or_else(|| PolicyError::UnparsableScore {
        reply: reply.clone(),
    })?;
    Ok(JudgeScore {
        value,
        raw_reply: reply,
    })
}

/// Extracts the number following the last "score is" in `reply` and maps
/// it onto [0, 1].
pub fn parse_judge_score(reply: &str) -> Option<f64> {
    let lower = reply.to_ascii_lowercase();
    let at = lower.rfind("score is")? + "score is".len();
    let tail =
        reply[at..].trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '[' | '*' | ':'));
    let mut end = tail
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(tail.len());
    if end == 0 {
        return None;
    }
    let rest = &tail[end..];
    if rest.starts_with('.') && rest[1..].starts_with(|c: char| c.is_ascii_digit()) {
        end += 1 + rest[1..]
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(rest.len() - 1);
    }
    tail[..end].parse::<f64>().ok().map(normalize_score)
}

/// Keeps values in [0, 1], divides values in (1, 100] by 100, clamps the rest.
pub fn normalize_score(n: f64) -> f64 {
    if n.is_nan() {
        return 0.0;
    }
    if n > 1.0 && n <= 100.0 {
        log::debug!("judge score {n} read on a 0-100 scale");
        return n / 100.0;
    }
    n.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{transition, ActionKind};
    use crate::retrieval::Document;
    use proptest::prelude::*;

    #[test]
    fn score_on_percent_scale() {
        assert_eq!(
            parse_judge_score("harsh words.\n\nSo the score is 88."),
            Some(0.88)
        );
        assert_eq!(parse_judge_score("So the score is 15."), Some(0.15));
        assert_eq!(parse_judge_score("So the score is 5"), Some(0.05));
    }

    #[test]
    fn score_on_unit_scale() {
        assert_eq!(parse_judge_score("So the score is 0.15"), Some(0.15));
        assert_eq!(parse_judge_score("So the score is [0.7]."), Some(0.7));
        assert_eq!(parse_judge_score("So the score is **1**"), Some(1.0));
        assert_eq!(parse_judge_score("so the Score is 0"), Some(0.0));
    }

    #[test]
    fn last_clause_wins_and_out_of_range_clamps() {
        assert_eq!(
            parse_judge_score("the score is 10. So the score is 0.4"),
            Some(0.4)
        );
        assert_eq!(parse_judge_score("So the score is 250"), Some(1.0));
    }

    #[test]
    fn missing_score() {
        assert_eq!(parse_judge_score("The reasoning is fine."), None);
        assert_eq!(parse_judge_score("So the score is high."), None);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent_and_bounded(n in -10.0f64..1000.0) {
            let once = normalize_score(n);
            prop_assert!((0.0..=1.0).contains(&once));
            prop_assert_eq!(normalize_score(once), once);
        }
    }

    fn scripted_for(
        state: &AgentState,
        params: &PolicyParams,
        replies: &[&str],
    ) -> ScriptedBackend {
        let req = action_request(state, params).unwrap();
        ScriptedBackend::new(true).with_reply(req.template, &req.user, replies.iter().copied())
    }

    #[test]
    fn query_from_reasoning_state() {
        let params = PolicyParams::default();
        let state = AgentState::new("Who directed Shark Monroe?");
        let backend = scripted_for(
            &state,
            &params,
            &["<query>director of Shark Monroe</query>"],
        );
        let step = generate_action(&state, &backend, &params).unwrap();
        assert_eq!(step.kind, ActionKind::QueryGeneration);
        assert_eq!(step.payload, "director of Shark Monroe");
        let calls = backend.calls();
        assert_eq!(calls[0].template, TemplateName::Reasoning);
        assert!(calls[0]
            .system
            .starts_with("You are a question-answering assistant"));
    }

    #[test]
    fn evidence_from_grounding_state() {
        let params = PolicyParams::default();
        let s0 = AgentState::new("Who directed Shark Monroe?");
        let q =
            crate::agent::parse_action("<query>Shark Monroe</query>", Stage::Reasoning).unwrap();
        let state = transition(&s0, q).unwrap().with_docs(vec![Document::new(
            "1",
            "Shark Monroe",
            "William S. Hart directed Shark Monroe.",
        )]);
        let backend = scripted_for(
            &state,
            &params,
            &["Based on the query, the relevant evidence is <evidence>William S. Hart directed Shark Monroe, which was released in 1918.</evidence>."],
        );
        let step = generate_action(&state, &backend, &params).unwrap();
        assert_eq!(step.kind, ActionKind::EvidenceExtraction);
        assert_eq!(step.index, 1);
        let calls = backend.calls();
        assert_eq!(calls[0].template, TemplateName::Grounding);
        assert!(calls[0].user.contains("Doc 1: Shark Monroe"));
    }

    #[test]
    fn malformed_retries_exhaust() {
        let params = PolicyParams::default();
        let state = AgentState::new("q");
        let backend = ScriptedBackend::new(false).with_default_reply("garbled");
        let err = generate_action(&state, &backend, &params).unwrap_err();
        assert_eq!(
            err,
            PolicyError::MalformedAction {
                raw: "garbled".into(),
                attempts: 3
            }
        );
        assert_eq!(backend.calls().len(), 3);
    }

    #[test]
    fn malformed_then_valid_recovers() {
        let params = PolicyParams::default();
        let state = AgentState::new("q");
        let backend = scripted_for(&state, &params, &["garbled", "<answer>x</answer>"]);
        assert_eq!(
            generate_action(&state, &backend, &params).unwrap().payload,
            "x"
        );
    }

    #[test]
    fn terminal_state_cannot_act() {
        let params = PolicyParams::default();
        let s0 = AgentState::new("q");
        let a = crate::agent::parse_action("<answer>x</answer>", Stage::Reasoning).unwrap();
        let done = transition(&s0, a).unwrap();
        let backend = ScriptedBackend::new(false).with_default_reply("<answer>y</answer>");
        assert_eq!(
            generate_action(&done, &backend, &params),
            Err(PolicyError::InvalidStage(Stage::Terminal))
        );
    }

    #[test]
    fn judge_uses_zero_temperature_and_parses() {
        let params = PolicyParams::default();
        let s0 = AgentState::new("Which film has the director died later?");
        let q = crate::agent::parse_action("<query>x</query>", Stage::Reasoning).unwrap();
        let state = transition(&s0, q).unwrap();
        let golds = vec!["Il Coraggio.".to_string()];
        let backend = ScriptedBackend::new(false).with_default_reply("Flawed. So the score is 88.");
        let score = judge_evaluate(&state, &golds, &backend, &params).unwrap();
        assert_eq!(score.value, 0.88);
        let call = &backend.calls()[0];
        assert_eq!(call.template, TemplateName::ProcessEvaluation);
        assert_eq!(call.temperature, 0.0);
        assert!(call.user.contains("Golden answers: Il Coraggio."));

        let backend = ScriptedBackend::new(false).with_default_reply("no verdict");
        assert!(matches!(
            judge_evaluate(&state, &golds, &backend, &params),
            Err(PolicyError::UnparsableScore { .. })
        ));
    }
}
