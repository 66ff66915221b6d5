use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{score_prediction, Aggregate, EvalError, GoldEntry, Prediction};
use crate::inference::{run_batch, InferenceConfig};
use crate::policy::PolicyBackend;
use crate::retrieval::Retriever;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Policy-call budget per question.
    RoundsCap,
    TopK,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::RoundsCap => "rounds",
            SweepAxis::TopK => "topk",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rounds" | "rounds_cap" | "max-rounds" => Ok(SweepAxis::RoundsCap),
            "topk" | "top_k" | "k" => Ok(SweepAxis::TopK),
            other => Err(format!(
                "unknown sweep axis {other:?} (expected rounds or topk)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub em: f64,
    pub f1: f64,
    pub n: usize,
    /// Questions whose run errored; they are scored as unanswered.
    pub failures: usize,
}

/// Plot-ready column layout of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub em: Vec<f64>,
    pub f1: Vec<f64>,
    pub n: Vec<usize>,
}

impl SweepSeries {
    pub fn new(axis: SweepAxis, rows: &[SweepRow]) -> Self {
        SweepSeries {
            axis,
            values: rows.iter().map(|r| r.value).collect(),
            em: rows.iter().map(|r| r.em).collect(),
            f1: rows.iter().map(|r| r.f1).collect(),
            n: rows.iter().map(|r| r.n).collect(),
        }
    }
}

/// Re-runs inference on `questions` once per axis value.
pub fn sweep<B, R>(
    axis: SweepAxis,
    values: &[usize],
    questions: &[GoldEntry],
    backend: &B,
    retriever: &R,
    cfg: &InferenceConfig,
    parallelism: usize,
) -> Result<Vec<SweepRow>, EvalError>
where
    B: PolicyBackend + ?Sized,
    R: Retriever + ?Sized,
{
    if values.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    if questions.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let texts: Vec<String> = questions.iter().map(|g| g.question.clone()).collect();
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cell_cfg = cfg.clone();
        match axis {
            SweepAxis::RoundsCap => cell_cfg.max_rounds = value,
            SweepAxis::TopK => cell_cfg.top_k = value,
        }
        let results = run_batch(&texts, backend, retriever, &cell_cfg, parallelism);
        let mut failures = 0;
        let records: Vec<_> = results
            .iter()
            .zip(questions)
            .map(|(result, gold)| {
                let prediction = match result {
                    Ok(t) => Prediction::from(t),
                    Err(err) => {
                        failures += 1;
                        log::warn!("{axis}={value} question {:?}: {err}", gold.id);
                        err.partial().map(Prediction::from).unwrap_or(Prediction {
                            question: gold.question.clone(),
                            answer: None,
                            rounds_used: 0,
                            retrieval_count: 0,
                        })
                    }
                };
                score_prediction(&prediction, gold)
            })
            .collect();
        let agg = Aggregate::from_records(&records)?;
        rows.push(SweepRow {
            value,
            em: agg.em,
            f1: agg.f1,
            n: agg.n,
            failures,
        });
    }
    Ok(rows)
}

/// Writes `value,em,f1,n` rows; scores are percentages with 2 decimals.
pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "value,em,f1,n")?;
    for r in rows {
        writeln!(out, "{},{:.2},{:.2},{}", r.value, r.em, r.f1, r.n)?;
    }
    out.flush()
}
