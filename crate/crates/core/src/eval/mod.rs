//! Answer metrics and run evaluation.
//!
//! EM and F1 use [`normalize`]; with several gold answers the best-scoring
//! one counts. F1 uses multiset token overlap.

mod sweep;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Transcript;
use crate::inference::TranscriptRecord;
pub use crate::text::normalize;

pub use sweep::{sweep, write_sweep_csv, SweepAxis, SweepRow, SweepSeries};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold answers for question {0:?}")]
    MissingGold(String),
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("gold file {path} line {line}: {reason}")]
    GoldFormat {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sweep needs at least one value")]
    EmptySweep,
}

fn best_over<F: Fn(&str) -> f64, S: AsRef<str>>(golds: &[S], score: F) -> f64 {
    golds.iter().map(|g| score(g.as_ref())).fold(0.0, f64::max)
}

/// 1 if the normalized prediction equals some normalized gold answer.
pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> u8 {
    let pred = normalize(prediction);
    u8::from(golds.iter().any(|g| normalize(g.as_ref()) == pred))
}

fn f1_single(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in gold {
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for tok in pred {
        if let Some(c) = counts.get_mut(tok.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Token-level F1 against the best-matching gold answer.
pub fn f1_score<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    let pred = normalize(prediction);
    best_over(golds, |g| f1_single(&pred, &normalize(g)))
}

/// One line of a gold file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub id: String,
    pub question: String,
    pub golden_answers: Vec<String>,
}

#[derive(Deserialize)]
struct RawGold {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: String,
    #[serde(default)]
    golden_answers: Vec<String>,
}

/// Reads a gold JSONL file (`{id, question, golden_answers}` per line).
/// A missing id becomes the 1-based line number; missing answers an empty
/// list, so the same reader serves plain question files.
pub fn read_gold_file(path: impl AsRef<Path>) -> Result<Vec<GoldEntry>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let format_err = |reason: String| EvalError::GoldFormat {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let raw: RawGold = serde_json::from_str(line).map_err(|e| format_err(e.to_string()))?;
        let id = match raw.id {
            None => (i + 1).to_string(),
            Some(serde_json::Value::String(s)) => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(other) => return Err(format_err(format!("bad id {other}"))),
        };
        out.push(GoldEntry {
            id,
            question: raw.question,
            golden_answers: raw.golden_answers,
        });
    }
    Ok(out)
}

/// Gold entries keyed by question text.
#[derive(Debug, Clone, Default)]
pub struct GoldMap(BTreeMap<String, GoldEntry>);

impl GoldMap {
    pub fn get(&self, question: &str) -> Option<&GoldEntry> {
        self.0.get(question)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<GoldEntry> for GoldMap {
    fn from_iter<I: IntoIterator<Item = GoldEntry>>(iter: I) -> Self {
        GoldMap(iter.into_iter().map(|g| (g.question.clone(), g)).collect())
    }
}

/// The parts of a transcript the metrics look at.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub question: String,
    pub answer: Option<String>,
    pub rounds_used: usize,
    pub retrieval_count: usize,
}

impl From<&Transcript> for Prediction {
    fn from(t: &Transcript) -> Self {
        Prediction {
            question: t.question.clone(),
            answer: t.final_answer.clone(),
            rounds_used: t.rounds_used,
            retrieval_count: t.retrievals.len(),
        }
    }
}

impl From<&TranscriptRecord> for Prediction {
    fn from(t: &TranscriptRecord) -> Self {
        Prediction {
            question: t.question.clone(),
            answer: t.final_answer.clone(),
            rounds_used: t.rounds_used,
            retrieval_count: t.retrieval_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub prediction: String,
    pub golden_answers: Vec<String>,
    pub em: u8,
    pub f1: f64,
    pub rounds_used: usize,
    pub retrieval_count: usize,
}

/// Means over records, scaled to percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn from_records(records: &[EvalRecord]) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::EmptyEvaluation);
        }
        let n = records.len() as f64;
        Ok(Aggregate {
            em: 100.0 * records.iter().map(|r| r.em as f64).sum::<f64>() / n,
            f1: 100.0 * records.iter().map(|r| r.f1).sum::<f64>() / n,
            n: records.len(),
        })
    }
}

pub fn score_prediction(prediction: &Prediction, gold: &GoldEntry) -> EvalRecord {
    let pred = prediction.answer.clone().unwrap_or_default();
    EvalRecord {
        question_id: gold.id.clone(),
        em: exact_match(&pred, &gold.golden_answers),
        f1: f1_score(&pred, &gold.golden_answers),
        prediction: pred,
        golden_answers: gold.golden_answers.clone(),
        rounds_used: prediction.rounds_used,
        retrieval_count: prediction.retrieval_count,
    }
}

/// Scores each prediction; answerless transcripts count as empty answers.
pub fn evaluate_run(
    predictions: &[Prediction],
    golds: &GoldMap,
) -> Result<(Vec<EvalRecord>, Aggregate), EvalError> {
    let records = predictions
        .iter()
        .map(|p| {
            golds
                .get(&p.question)
                .map(|g| score_prediction(p, g))
                .ok_or_else(|| EvalError::MissingGold(p.question.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = Aggregate::from_records(&records)?;
    Ok((records, aggregate))
}
