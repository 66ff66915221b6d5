use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

const REASONING: &str = include_str!("../../prompts/reasoning.txt");
const GROUNDING: &str = include_str!("../../prompts/grounding.txt");
const PROCESS_EVALUATION: &str = include_str!("../../prompts/process_evaluation.txt");

/// The only substitution slot, present in the reasoning prompt.
pub const ANSWER_FORMAT_SLOT: &str = "{answer_format}";
pub const DEFAULT_ANSWER_FORMAT: &str = "answer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Reasoning,
    Grounding,
    ProcessEvaluation,
}

impl TemplateName {
    pub const ALL: [TemplateName; 3] = [
        TemplateName::Reasoning,
        TemplateName::Grounding,
        TemplateName::ProcessEvaluation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Reasoning => "reasoning",
            TemplateName::Grounding => "grounding",
            TemplateName::ProcessEvaluation => "process_evaluation",
        }
    }

    /// File name of the checked-in resource under `prompts/`.
    pub fn resource_file(self) -> &'static str {
        match self {
            TemplateName::Reasoning => "reasoning.txt",
            TemplateName::Grounding => "grounding.txt",
            TemplateName::ProcessEvaluation => "process_evaluation.txt",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system_text: &'static str,
    pub answer_format_slot: Option<String>,
}

impl PromptTemplate {
    pub fn reasoning(answer_format: impl Into<String>) -> Self {
        PromptTemplate {
            name: TemplateName::Reasoning,
            system_text: REASONING,
            answer_format_slot: Some(answer_format.into()),
        }
    }

    pub fn grounding() -> Self {
        PromptTemplate {
            name: TemplateName::Grounding,
            system_text: GROUNDING,
            answer_format_slot: None,
        }
    }

    pub fn process_evaluation() -> Self {
        PromptTemplate {
            name: TemplateName::ProcessEvaluation,
            system_text: PROCESS_EVALUATION,
            answer_format_slot: None,
        }
    }

    /// Unsubstituted resource text for `name`.
    pub fn raw(name: TemplateName) -> &'static str {
        match name {
            TemplateName::Reasoning => REASONING,
            TemplateName::Grounding => GROUNDING,
            TemplateName::ProcessEvaluation => PROCESS_EVALUATION,
        }
    }

    /// System prompt with the answer-format slot filled in.
    pub fn system_prompt(&self) -> String {
        match &self.answer_format_slot {
            Some(fmt) => self.system_text.replace(ANSWER_FORMAT_SLOT, fmt),
            None => self.system_text.to_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn templates_match_resources_byte_for_byte() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts");
        for name in TemplateName::ALL {
            let on_disk = std::fs::read(dir.join(name.resource_file())).unwrap();
            assert_eq!(PromptTemplate::raw(name).as_bytes(), &on_disk[..], "{name}");
        }
    }

    #[test]
    fn only_reasoning_has_the_slot() {
        assert_eq!(REASONING.matches(ANSWER_FORMAT_SLOT).count(), 1);
        assert!(!GROUNDING.contains('{'));
        assert!(!PROCESS_EVALUATION.contains('{'));
        let filled = PromptTemplate::reasoning("short phrase").system_prompt();
        assert!(filled.contains("<answer>short phrase</answer>"));
        assert!(!filled.contains(ANSWER_FORMAT_SLOT));
    }

    #[test]
    fn opening_lines() {
        assert!(REASONING.starts_with("You are a question-answering assistant"));
        assert!(GROUNDING.starts_with("You are an information retrieval assistant"));
        assert!(PROCESS_EVALUATION.contains("So the score is [Score]."));
    }
}
