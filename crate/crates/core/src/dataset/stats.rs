use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PreferencePair;
use crate::agent::{ActionKind, Stage};
use crate::mcts::Tree;
use crate::text::whitespace_token_count;

const GAP_BIN_WIDTH: f64 = 0.1;
const GAP_BINS: usize = 10;
const TOKEN_BIN_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub avg: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return SummaryStats::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        SummaryStats {
            count: n,
            avg: sorted.iter().sum::<f64>() / n as f64,
            min: sorted[0],
            median,
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub question_count: usize,
    pub pair_count: usize,
    /// Chosen action kind per pair; sums to `pair_count`.
    pub action_kind_histogram: BTreeMap<ActionKind, usize>,
    /// Distinct chosen actions (question, prefix, text) and their kinds.
    pub distinct_action_count: usize,
    pub distinct_action_kind_histogram: BTreeMap<ActionKind, usize>,
    pub pair_type_histogram: BTreeMap<String, usize>,
    /// Query steps per answered trajectory.
    pub iteration_stats: SummaryStats,
    pub iteration_histogram: BTreeMap<usize, usize>,
    /// Whitespace tokens per chosen and rejected step.
    pub token_length_stats: SummaryStats,
    pub token_length_histogram: BTreeMap<usize, usize>,
    pub reward_gap_histogram: Vec<GapBin>,
}

fn query_count<'a>(steps: impl IntoIterator<Item = &'a crate::agent::ActionStep>) -> usize {
    steps
        .into_iter()
        .filter(|s| s.kind == ActionKind::QueryGeneration)
        .count()
}

/// Query counts for the answered trajectories. Terminal tree nodes are used
/// when trees are given; otherwise pairs whose chosen step is an answer.
fn iteration_counts(pairs: &[PreferencePair], trees: &[Tree]) -> Vec<usize> {
    if !trees.is_empty() {
        return trees
            .iter()
            .flat_map(|t| t.nodes())
            .filter(|n| n.stage() == Stage::Terminal)
            .map(|n| query_count(&n.state.steps))
            .collect();
    }
    let mut seen = BTreeSet::new();
    pairs
        .iter()
        .filter(|p| p.chosen.kind == ActionKind::AnswerGeneration)
        .filter(|p| {
            let key: Vec<&str> = p.prefix.iter().map(|s| s.raw_text.as_str()).collect();
            seen.insert((p.question.as_str(), key, p.chosen.raw_text.as_str()))
        })
        .map(|p| query_count(&p.prefix))
        .collect()
}

fn gap_bin(gap: f64) -> usize {
    let idx = (gap / GAP_BIN_WIDTH + 1e-9).floor();
    (idx.max(0.0) as usize).min(GAP_BINS - 1)
}

pub fn compute_stats(pairs: &[PreferencePair], trees: &[Tree]) -> DatasetStats {
    let questions: BTreeSet<&str> = pairs.iter().map(|p| p.question.as_str()).collect();

    let mut action_kind_histogram = BTreeMap::new();
    let mut pair_type_histogram = BTreeMap::new();
    let mut distinct = BTreeMap::new();
    let mut token_lengths = Vec::with_capacity(pairs.len() * 2);
    let mut token_length_histogram = BTreeMap::new();
    let mut reward_gap_histogram: Vec<GapBin> = (0..GAP_BINS)
        .map(|i| GapBin {
            lo: i as f64 * GAP_BIN_WIDTH,
            hi: (i + 1) as f64 * GAP_BIN_WIDTH,
            count: 0,
        })
        .collect();

    for p in pairs {
        *action_kind_histogram.entry(p.chosen.kind).or_insert(0) += 1;
        *pair_type_histogram
            .entry(p.pair_type.to_string())
            .or_insert(0) += 1;
        let prefix: Vec<&str> = p.prefix.iter().map(|s| s.raw_text.as_str()).collect();
        distinct.insert(
            (p.question.as_str(), prefix, p.chosen.raw_text.as_str()),
            p.chosen.kind,
        );
        for step in [&p.chosen, &p.rejected] {
            let n = whitespace_token_count(&step.raw_text);
            token_lengths.push(n as f64);
            *token_length_histogram
                .entry(n / TOKEN_BIN_WIDTH * TOKEN_BIN_WIDTH)
                .or_insert(0) += 1;
        }
        reward_gap_histogram[gap_bin(p.gap())].count += 1;
    }

    let mut distinct_action_kind_histogram = BTreeMap::new();
    for kind in distinct.values() {
        *distinct_action_kind_histogram.entry(*kind).or_insert(0) += 1;
    }

    let iterations = iteration_counts(pairs, trees);
    let mut iteration_histogram = BTreeMap::new();
    for &n in &iterations {
        *iteration_histogram.entry(n).or_insert(0) += 1;
    }
    let iteration_values: Vec<f64> = iterations.iter().map(|&n| n as f64).collect();

    DatasetStats {
        question_count: questions.len(),
        pair_count: pairs.len(),
        action_kind_histogram,
        distinct_action_count: distinct.len(),
        distinct_action_kind_histogram,
        pair_type_histogram,
        iteration_stats: SummaryStats::from_values(&iteration_values),
        iteration_histogram,
        token_length_stats: SummaryStats::from_values(&token_lengths),
        token_length_histogram,
        reward_gap_histogram,
    }
}

impl DatasetStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    fn kind_count(map: &BTreeMap<ActionKind, usize>, kind: ActionKind) -> usize {
        map.get(&kind).copied().unwrap_or(0)
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let h = &self.action_kind_histogram;
        let d = &self.distinct_action_kind_histogram;
        let it = &self.iteration_stats;
        let tok = &self.token_length_stats;
        let rows: Vec<(&str, String)> = vec![
            ("Questions", self.question_count.to_string()),
            ("Pairs", self.pair_count.to_string()),
            (
                "Actions (Query/Evidence/Answer)",
                format!(
                    "{}/{}/{}",
                    Self::kind_count(h, ActionKind::QueryGeneration),
                    Self::kind_count(h, ActionKind::EvidenceExtraction),
                    Self::kind_count(h, ActionKind::AnswerGeneration)
                ),
            ),
            (
                "Distinct chosen actions",
                self.distinct_action_count.to_string(),
            ),
            (
                "Distinct (Query/Evidence/Answer)",
                format!(
                    "{}/{}/{}",
                    Self::kind_count(d, ActionKind::QueryGeneration),
                    Self::kind_count(d, ActionKind::EvidenceExtraction),
                    Self::kind_count(d, ActionKind::AnswerGeneration)
                ),
            ),
            (
                "Avg./Min./Med./Max. Iteration",
                format!("{:.1}/{}/{}/{}", it.avg, it.min, it.median, it.max),
            ),
            (
                "Avg./Min./Med./Max. Tokens",
                format!("{:.1}/{}/{}/{}", tok.avg, tok.min, tok.median, tok.max),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        if !self.pair_type_histogram.is_empty() {
            let types: Vec<String> = self
                .pair_type_histogram
                .iter()
                .map(|(t, n)| format!("{t}:{n}"))
                .collect();
            let _ = writeln!(out, "{:<width$}  {}", "Pair types", types.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{parse_action, transition, ActionStep};
    use crate::dataset::PairType;

    fn step(raw: &str, stage: Stage, index: usize) -> ActionStep {
        let mut s = parse_action(raw, stage).unwrap();
        s.index = index;
        s
    }

    fn answer_pair(question: &str, prefix: Vec<ActionStep>, gap: f64) -> PreferencePair {
        let n = prefix.len();
        let chosen = step("<answer>good answer</answer>", Stage::Reasoning, n);
        let rejected = step("<answer>bad</answer>", Stage::Reasoning, n);
        PreferencePair {
            question: question.into(),
            prefix,
            pair_type: PairType(chosen.kind, rejected.kind),
            chosen,
            rejected,
            chosen_reward: 0.5 + gap,
            rejected_reward: 0.5,
            source: "t".into(),
        }
    }

    fn hops(n: usize) -> Vec<ActionStep> {
        let mut out = Vec::new();
        for i in 0..n {
            out.push(step(
                &format!("<query>q{i}</query>"),
                Stage::Reasoning,
                out.len(),
            ));
            out.push(step("<evidence>e</evidence>", Stage::Grounding, out.len()));
        }
        out
    }

    #[test]
    fn single_pair_totals_are_one() {
        let s = compute_stats(&[answer_pair("q", vec![], 0.3)], &[]);
        assert_eq!(s.question_count, 1);
        assert_eq!(s.pair_count, 1);
        assert_eq!(s.action_kind_histogram.values().sum::<usize>(), 1);
        assert_eq!(s.distinct_action_kind_histogram.values().sum::<usize>(), 1);
        assert_eq!(s.pair_type_histogram.values().sum::<usize>(), 1);
        assert_eq!(s.iteration_histogram.values().sum::<usize>(), 1);
        assert_eq!(
            s.reward_gap_histogram
                .iter()
                .map(|b| b.count)
                .sum::<usize>(),
            1
        );
        assert_eq!(s.reward_gap_histogram[3].count, 1);
        // one chosen and one rejected step
        assert_eq!(s.token_length_histogram.values().sum::<usize>(), 2);
        assert_eq!(s.token_length_stats.max, 2.0);
        assert_eq!(s.token_length_stats.min, 1.0);
    }

    #[test]
    fn iteration_counts_from_pairs() {
        let pairs = [
            answer_pair("a", hops(1), 0.2),
            answer_pair("b", hops(3), 0.2),
        ];
        let s = compute_stats(&pairs, &[]);
        assert_eq!(s.iteration_stats.avg, 2.0);
        assert_eq!(s.iteration_stats.min, 1.0);
        assert_eq!(s.iteration_stats.max, 3.0);
    }

    #[test]
    fn iteration_counts_from_trees() {
        let mut trees = Vec::new();
        for n in [1, 3] {
            let mut tree = Tree::new(format!("q{n}"), vec![]);
            let mut at = Tree::ROOT;
            for s in hops(n)
                .into_iter()
                .chain([step("<answer>x</answer>", Stage::Reasoning, 0)])
            {
                let next = transition(&tree.node(at).state, s).unwrap();
                at = tree.add_child(at, next, Some(0.5));
            }
            trees.push(tree);
        }
        let s = compute_stats(&[], &trees);
        assert_eq!(s.iteration_stats.avg, 2.0);
        assert_eq!(s.iteration_stats.min, 1.0);
        assert_eq!(s.iteration_stats.max, 3.0);
        assert_eq!(s.pair_count, 0);
    }

    #[test]
    fn empty_input_is_zero() {
        let s = compute_stats(&[], &[]);
        assert_eq!(s.question_count, 0);
        assert_eq!(s.iteration_stats, SummaryStats::default());
        assert!(s.render_table().contains("Questions"));
    }

    #[test]
    fn gap_bins_edges() {
        assert_eq!(gap_bin(0.01), 0);
        assert_eq!(gap_bin(0.1), 1);
        assert_eq!(gap_bin(0.3), 3);
        assert_eq!(gap_bin(1.0), 9);
    }
}
