//! Preference pairs from annotated trees.
//!
//! Trees are first pruned to branches that end in an answer. At every node
//! with two or more surviving children, sibling actions are paired by value
//! and two filters apply: identical reply texts are dropped, and so are
//! pairs whose value gap is below the threshold (0.01 by default).

mod stats;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{parse_action, ActionKind, ActionStep, Stage};
use crate::mcts::{NodeId, Tree, TreeNode};

pub use stats::{compute_stats, DatasetStats, SummaryStats};

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("tree has no branch ending in an answer")]
    EmptyTree,
    #[error("pair {index} fails validation: {reason}")]
    Validation { index: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pairs file line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Highest-valued child against lowest-valued child at each node.
    #[default]
    BestWorst,
    /// Every ordered pair of siblings.
    AllOrdered,
}

impl FromStr for PairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best_worst" | "best-worst" => Ok(PairMode::BestWorst),
            "all_ordered" | "all-ordered" => Ok(PairMode::AllOrdered),
            other => Err(format!("unknown pair mode {other:?}")),
        }
    }
}

/// Chosen/rejected action kinds, written as e.g. `A-Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairType(pub ActionKind, pub ActionKind);

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0.code(), self.1.code())
    }
}

impl FromStr for PairType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let parsed = match (chars.next(), chars.next(), chars.next(), chars.next()) {
            (Some(a), Some('-'), Some(b), None) => {
                ActionKind::from_code(a).zip(ActionKind::from_code(b))
            }
            _ => None,
        };
        parsed
            .map(|(a, b)| PairType(a, b))
            .ok_or_else(|| format!("bad pair type {s:?}"))
    }
}

impl Serialize for PairType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub question: String,
    pub prefix: Vec<ActionStep>,
    pub chosen: ActionStep,
    pub rejected: ActionStep,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
    pub pair_type: PairType,
    pub source: String,
}

impl PreferencePair {
    pub fn gap(&self) -> f64 {
        self.chosen_reward - self.rejected_reward
    }

    /// Checks the pair invariants against gap threshold `theta`.
    pub fn validate(&self, theta: f64) -> Result<(), String> {
        if self.gap().is_nan() || self.gap() < theta {
            return Err(format!("reward gap {} below {theta}", self.gap()));
        }
        if self.chosen.raw_text == self.rejected.raw_text {
            return Err("chosen and rejected texts are identical".into());
        }
        if self.chosen.index != self.prefix.len() || self.rejected.index != self.prefix.len() {
            return Err("chosen/rejected do not continue the shared prefix".into());
        }
        if self.pair_type != PairType(self.chosen.kind, self.rejected.kind) {
            return Err("pair type does not match action kinds".into());
        }
        Ok(())
    }
}

/// Copy of `tree` keeping only nodes on a path to a terminal node. Node ids
/// are renumbered in original order; values and sample logs are untouched.
pub fn prune_tree(tree: &Tree) -> Result<Tree, DatasetError> {
    let n = tree.len();
    let mut keep = vec![false; n];
    // children always have larger ids than their parents
    for id in (0..n).rev() {
        let node = tree.node(id);
        keep[id] = node.stage() == Stage::Terminal || node.children.iter().any(|&c| keep[c]);
    }
    if !keep[Tree::ROOT] {
        return Err(DatasetError::EmptyTree);
    }
    let mut remap = vec![usize::MAX; n];
    let mut next = 0;
    for id in 0..n {
        if keep[id] {
            remap[id] = next;
            next += 1;
        }
    }
    let golden = tree.golden_answers.clone();
    let mut out = Tree::with_root(tree.root().state.clone(), golden);
    copy_stats(out.node_mut(Tree::ROOT), tree.root());
    for id in 1..n {
        if !keep[id] {
            continue;
        }
        let node = tree.node(id);
        let parent = remap[node.parent.expect("non-root has a parent")];
        let new_id = out.add_child(parent, node.state.clone(), node.value);
        debug_assert_eq!(new_id, remap[id]);
        copy_stats(out.node_mut(new_id), node);
    }
    Ok(out)
}

fn copy_stats(dst: &mut TreeNode, src: &TreeNode) {
    dst.visit_count = src.visit_count;
    dst.q_value = src.q_value;
    dst.samples = src.samples.clone();
    dst.value = src.value;
    dst.terminal_f1 = src.terminal_f1;
    dst.exhausted = src.exhausted;
}

fn make_pair(
    tree: &Tree,
    parent: NodeId,
    chosen: NodeId,
    rejected: NodeId,
    source: &str,
) -> PreferencePair {
    let (p, c, r) = (tree.node(parent), tree.node(chosen), tree.node(rejected));
    let chosen_step = c.action().expect("child has an action").clone();
    let rejected_step = r.action().expect("child has an action").clone();
    PreferencePair {
        question: tree.question().to_owned(),
        prefix: p.state.steps.clone(),
        pair_type: PairType(chosen_step.kind, rejected_step.kind),
        chosen: chosen_step,
        rejected: rejected_step,
        chosen_reward: c.q_value,
        rejected_reward: r.q_value,
        source: source.to_owned(),
    }
}

/// Extracts sibling preference pairs from a pruned tree and applies the
/// identical-text and minimum-gap filters. Output order follows node ids.
pub fn extract_pairs(tree: &Tree, theta: f64, mode: PairMode, source: &str) -> Vec<PreferencePair> {
    let mut pairs = Vec::new();
    for node in tree.nodes() {
        let kids = &node.children;
        if kids.len() < 2 {
            continue;
        }
        match mode {
            PairMode::BestWorst => {
                let q = |id: &NodeId| tree.node(*id).q_value;
                let mut best = kids[0];
                let mut worst = kids[0];
                for id in &kids[1..] {
                    if q(id) > q(&best) {
                        best = *id;
                    }
                    if q(id) < q(&worst) {
                        worst = *id;
                    }
                }
                if best != worst {
                    pairs.push(make_pair(tree, node.id, best, worst, source));
                }
            }
            PairMode::AllOrdered => {
                for &a in kids {
                    for &b in kids {
                        if a != b {
                            pairs.push(make_pair(tree, node.id, a, b, source));
                        }
                    }
                }
            }
        }
    }
    pairs.retain(|p| p.chosen.raw_text != p.rejected.raw_text && p.gap() >= theta);
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StepRecord {
    raw_text: String,
    kind: ActionKind,
    reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairRecord {
    question: String,
    prefix: Vec<String>,
    chosen: StepRecord,
    rejected: StepRecord,
    pair_type: PairType,
    source: String,
}

impl From<&PreferencePair> for PairRecord {
    fn from(p: &PreferencePair) -> Self {
        PairRecord {
            question: p.question.clone(),
            prefix: p.prefix.iter().map(|s| s.raw_text.clone()).collect(),
            chosen: StepRecord {
                raw_text: p.chosen.raw_text.clone(),
                kind: p.chosen.kind,
                reward: p.chosen_reward,
            },
            rejected: StepRecord {
                raw_text: p.rejected.raw_text.clone(),
                kind: p.rejected.kind,
                reward: p.rejected_reward,
            },
            pair_type: p.pair_type,
            source: p.source.clone(),
        }
    }
}

fn stage_of_kind(kind: ActionKind) -> Stage {
    match kind {
        ActionKind::EvidenceExtraction => Stage::Grounding,
        _ => Stage::Reasoning,
    }
}

impl PairRecord {
    /// Rebuilds the pair by replaying the prefix through the parser.
    fn into_pair(self) -> Result<PreferencePair, String> {
        let mut stage = Stage::Reasoning;
        let mut prefix = Vec::with_capacity(self.prefix.len());
        for (index, raw) in self.prefix.iter().enumerate() {
            let mut step =
                parse_action(raw, stage).map_err(|e| format!("prefix step {index}: {e}"))?;
            step.index = index;
            stage = step.kind.next_stage();
            prefix.push(step);
        }
        let leaf = |rec: &StepRecord| -> Result<ActionStep, String> {
            let expected = stage_of_kind(rec.kind);
            if expected != stage {
                return Err(format!("{} action cannot follow the prefix", rec.kind));
            }
            let mut step = parse_action(&rec.raw_text, stage).map_err(|e| e.to_string())?;
            if step.kind != rec.kind {
                return Err(format!(
                    "declared kind {} but text parses as {}",
                    rec.kind, step.kind
                ));
            }
            step.index = prefix.len();
            Ok(step)
        };
        Ok(PreferencePair {
            chosen: leaf(&self.chosen)?,
            rejected: leaf(&self.rejected)?,
            question: self.question,
            prefix,
            chosen_reward: self.chosen.reward,
            rejected_reward: self.rejected.reward,
            pair_type: self.pair_type,
            source: self.source,
        })
    }
}

/// Settings recorded next to an exported dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub alpha: f64,
    pub c_uct: f64,
    pub theta: f64,
    pub iterations: usize,
    pub mode: PairMode,
    /// Preference-optimization temperature intended for training; not used here.
    pub dpo_beta: f64,
    pub pair_count: usize,
}

/// Sidecar path: `<data>.meta.json`.
pub fn metadata_path(data: &Path) -> PathBuf {
    let mut name = data
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    data.with_file_name(name)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Validates every pair, then writes one JSON object per line plus the
/// metadata sidecar. Nothing is written if any pair is invalid.
pub fn export_dataset(
    pairs: &[PreferencePair],
    path: &Path,
    meta: &DatasetMetadata,
) -> Result<(), DatasetError> {
    for (index, pair) in pairs.iter().enumerate() {
        pair.validate(meta.theta)
            .map_err(|reason| DatasetError::Validation { index, reason })?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    write_pairs(&mut out, pairs).map_err(io_err(path))?;
    let meta = DatasetMetadata {
        pair_count: pairs.len(),
        ..meta.clone()
    };
    let meta_path = metadata_path(path);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&meta_path, text).map_err(io_err(&meta_path))
}

pub fn write_pairs<W: Write>(mut out: W, pairs: &[PreferencePair]) -> std::io::Result<()> {
    for pair in pairs {
        serde_json::to_writer(&mut out, &PairRecord::from(pair))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_pairs<R: BufRead>(input: R) -> Result<Vec<PreferencePair>, DatasetError> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Format {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Format {
            line: line_no,
            reason: e.to_string(),
        })?;
        pairs.push(record.into_pair().map_err(|reason| DatasetError::Format {
            line: line_no,
            reason,
        })?);
    }
    Ok(pairs)
}

pub fn read_pairs_file(path: &Path) -> Result<Vec<PreferencePair>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_pairs(std::io::BufReader::new(file))
}
