//! Tree search over agent trajectories with length-discounted rewards.
//!
//! Each node holds a visit count, a value in [0, 1] and its stage. One
//! iteration descends by UCT, expands a single policy step, scores the new
//! child (token F1 against the gold answers for terminal children, the
//! process judge otherwise) and backpropagates that score along the path.
//!
//! A node's value is the mean of its backpropagated samples, each
//! discounted by `alpha^steps` where `steps` is the total number of actions
//! in the trajectory that produced the sample.

mod dump;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{transition, ActionKind, ActionStep, AgentState, Stage};
use crate::eval::f1_score;
use crate::policy::{generate_action, judge_evaluate, PolicyBackend, PolicyError, PolicyParams};
use crate::retrieval::{RetrievalError, Retriever, DEFAULT_TOP_K};

pub use dump::{NodeDump, TreeDump, DUMP_FORMAT};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub v: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub state: AgentState,
    pub visit_count: usize,
    pub q_value: f64,
    pub samples: Vec<Sample>,
    /// The node's own score assigned at expansion.
    pub value: Option<f64>,
    pub terminal_f1: Option<f64>,
    /// Set once an expansion attempt from this node has failed.
    pub exhausted: bool,
}

impl TreeNode {
    pub fn stage(&self) -> Stage {
        self.state.stage
    }

    /// Number of actions from the root to this node.
    pub fn depth(&self) -> usize {
        self.state.steps.len()
    }

    /// The action that led to this node; `None` for the root.
    pub fn action(&self) -> Option<&ActionStep> {
        self.state.steps.last()
    }
}

/// Arena-allocated search tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub golden_answers: Vec<String>,
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub const ROOT: NodeId = 0;

    pub fn new(question: impl Into<String>, golden_answers: Vec<String>) -> Self {
        Tree::with_root(AgentState::new(question), golden_answers)
    }

    pub fn with_root(state: AgentState, golden_answers: Vec<String>) -> Self {
        Tree {
            golden_answers,
            nodes: vec![TreeNode {
                id: 0,
                parent: None,
                children: Vec::new(),
                state,
                visit_count: 0,
                q_value: 0.0,
                samples: Vec::new(),
                value: None,
                terminal_f1: None,
                exhausted: false,
            }],
        }
    }

    pub fn question(&self) -> &str {
        &self.nodes[0].state.question
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a child holding `state`. `value` is the node's own score; for a
    /// terminal state it is also recorded as the terminal F1.
    pub fn add_child(&mut self, parent: NodeId, state: AgentState, value: Option<f64>) -> NodeId {
        let id = self.nodes.len();
        let terminal_f1 = if state.stage == Stage::Terminal {
            value
        } else {
            None
        };
        self.nodes.push(TreeNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            state,
            visit_count: 0,
            q_value: 0.0,
            samples: Vec::new(),
            value,
            terminal_f1,
            exhausted: false,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Node ids from the root down to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub(crate) fn from_nodes(golden_answers: Vec<String>, nodes: Vec<TreeNode>) -> Self {
        Tree {
            golden_answers,
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub c_uct: f64,
    pub alpha: f64,
    pub max_children: usize,
    pub iterations: usize,
    pub max_depth: usize,
    pub judge_fallback_v: f64,
    pub top_k: usize,
    pub policy: PolicyParams,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            c_uct: std::f64::consts::SQRT_2,
            alpha: 0.9,
            max_children: 3,
            iterations: 24,
            max_depth: 12,
            judge_fallback_v: 0.0,
            top_k: DEFAULT_TOP_K,
            policy: PolicyParams::default(),
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), MctsError> {
        let bad = |msg: &str| Err(MctsError::InvalidConfig(msg.to_owned()));
        if self.c_uct.is_nan() || self.c_uct <= 0.0 {
            return bad("c_uct must be > 0");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if self.max_children == 0 || self.iterations == 0 || self.max_depth == 0 || self.top_k == 0
        {
            return bad("max_children, iterations, max_depth and top_k must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.judge_fallback_v) {
            return bad("judge_fallback_v must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MctsError {
    #[error("node has no children")]
    NoChildren,
    #[error("node {0} cannot be expanded")]
    NotExpandable(NodeId),
    #[error("expansion failed: {0}")]
    ExpansionFailed(#[from] ExpansionFailure),
    #[error("annotation failed: root could not be expanded: {0}")]
    AnnotationFailed(ExpansionFailure),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum ExpansionFailure {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// `q + c·√parent_visits / (1 + n)`, where `parent_visits` is the sum of
/// the sibling visit counts.
pub fn uct_score(q: f64, n: usize, parent_visits: usize, c_uct: f64) -> f64 {
    q + c_uct * (parent_visits as f64).sqrt() / (1.0 + n as f64)
}

/// Picks the child maximizing the UCT score; the lowest index wins ties.
pub fn select_child(tree: &Tree, node: NodeId, c_uct: f64) -> Result<NodeId, MctsError> {
    let children = &tree.node(node).children;
    let total: usize = children.iter().map(|&c| tree.node(c).visit_count).sum();
    let mut best: Option<(NodeId, f64)> = None;
    for &c in children {
        let child = tree.node(c);
        let score = uct_score(child.q_value, child.visit_count, total, c_uct);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((c, score));
        }
    }
    best.map(|(c, _)| c).ok_or(MctsError::NoChildren)
}

/// Mean of `v · alpha^steps` over `samples`; 0 for an empty log.
pub fn discounted_mean(samples: &[Sample], alpha: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples
        .iter()
        .map(|s| s.v * alpha.powi(s.steps as i32))
        .sum();
    sum / samples.len() as f64
}

/// Records one sample on every node of `path` and refreshes their values.
pub fn backpropagate(
    tree: &mut Tree,
    path: &[NodeId],
    v: f64,
    leaf_total_steps: usize,
    alpha: f64,
) {
    let sample = Sample {
        v,
        steps: leaf_total_steps,
    };
    for &id in path {
        let node = tree.node_mut(id);
        node.samples.push(sample);
        node.visit_count += 1;
        node.q_value = discounted_mean(&node.samples, alpha);
    }
}

/// True if `expand` may be called on `node`.
pub fn is_expandable(node: &TreeNode, cfg: &MctsConfig) -> bool {
    node.stage() != Stage::Terminal
        && !node.exhausted
        && node.children.len() < cfg.max_children
        && node.depth() < cfg.max_depth
}

/// Samples one step from `node` and attaches the scored child.
pub fn expand<B, R>(
    tree: &mut Tree,
    node: NodeId,
    backend: &B,
    retriever: &R,
    cfg: &MctsConfig,
) -> Result<NodeId, MctsError>
where
    B: PolicyBackend + ?Sized,
    R: Retriever + ?Sized,
{
    if !is_expandable(tree.node(node), cfg) {
        return Err(MctsError::NotExpandable(node));
    }
    let parent_state = &tree.node(node).state;
    let step =
        generate_action(parent_state, backend, &cfg.policy).map_err(ExpansionFailure::from)?;
    let kind = step.kind;
    let mut state =
        transition(parent_state, step).expect("generate_action yields stage-legal steps");
    if kind == ActionKind::QueryGeneration {
        let query = state.pending_query().unwrap_or_default().to_owned();
        let docs = retriever
            .retrieve(&query, cfg.top_k)
            .map_err(ExpansionFailure::from)?;
        state = state.with_docs(docs);
    }
    let value = match state.answer() {
        Some(answer) => f1_score(answer, &tree.golden_answers),
        None => match judge_evaluate(&state, &tree.golden_answers, backend, &cfg.policy) {
            Ok(score) => score.value,
            Err(err) => {
                log::warn!(
                    "judge failed for node at depth {} ({err}); using fallback {}",
                    state.steps.len(),
                    cfg.judge_fallback_v
                );
                cfg.judge_fallback_v
            }
        },
    };
    Ok(tree.add_child(node, state, Some(value)))
}

/// Builds the annotated search tree for one question.
pub fn annotate_question<B, R>(
    question: &str,
    golden_answers: &[String],
    backend: &B,
    retriever: &R,
    cfg: &MctsConfig,
) -> Result<Tree, MctsError>
where
    B: PolicyBackend + ?Sized,
    R: Retriever + ?Sized,
{
    cfg.validate()?;
    let mut tree = Tree::new(question, golden_answers.to_vec());
    for _ in 0..cfg.iterations {
        run_iteration(&mut tree, backend, retriever, cfg)?;
    }
    Ok(tree)
}

/// One selection/expansion/backpropagation round.
pub fn run_iteration<B, R>(
    tree: &mut Tree,
    backend: &B,
    retriever: &R,
    cfg: &MctsConfig,
) -> Result<(), MctsError>
where
    B: PolicyBackend + ?Sized,
    R: Retriever + ?Sized,
{
    let mut path = vec![Tree::ROOT];
    let mut current = Tree::ROOT;
    loop {
        let node = tree.node(current);
        if is_expandable(node, cfg) {
            match expand(tree, current, backend, retriever, cfg) {
                Ok(child) => {
                    path.push(child);
                    let child = tree.node(child);
                    let (v, steps) = (child.value.unwrap_or(cfg.judge_fallback_v), child.depth());
                    backpropagate(tree, &path, v, steps, cfg.alpha);
                }
                Err(MctsError::ExpansionFailed(failure)) => {
                    if current == Tree::ROOT && tree.root().children.is_empty() {
                        return Err(MctsError::AnnotationFailed(failure));
                    }
                    log::warn!("expansion failed at node {current} ({failure}); marking exhausted");
                    let node = tree.node_mut(current);
                    node.exhausted = true;
                    let steps = node.depth().max(1);
                    backpropagate(tree, &path, cfg.judge_fallback_v, steps, cfg.alpha);
                }
                Err(other) => return Err(other),
            }
            return Ok(());
        }
        if node.children.is_empty()
            || node.stage() == Stage::Terminal
            || node.depth() >= cfg.max_depth
        {
            // Leaf that cannot grow: replay its own score.
            let v = node.value.unwrap_or(cfg.judge_fallback_v);
            let steps = node.depth().max(1);
            backpropagate(tree, &path, v, steps, cfg.alpha);
            return Ok(());
        }
        current = select_child(tree, current, cfg.c_uct)?;
        path.push(current);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::parse_action;
    use crate::policy::{ClosureBackend, PolicyRequest, TemplateName};
    use crate::retrieval::{Bm25Params, CorpusIndex, Document};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn corpus() -> CorpusIndex {
        CorpusIndex::build(
            vec![
                Document::new(
                    "1",
                    "Il Coraggio",
                    "Il Coraggio is a 1955 film directed by Domenico Paolella.",
                ),
                Document::new("2", "Weather", "Rain is common in autumn."),
            ],
            Bm25Params::default(),
        )
    }

    fn golds() -> Vec<String> {
        vec!["Il Coraggio".to_string()]
    }

    fn child_state(parent: &AgentState, raw: &str) -> AgentState {
        let step = parse_action(raw, parent.stage).unwrap();
        transition(parent, step).unwrap()
    }

    #[test]
    fn uct_worked_example() {
        let mut tree = Tree::new("q", vec![]);
        let root = tree.root().state.clone();
        let a = tree.add_child(0, child_state(&root, "<query>a</query>"), Some(0.5));
        let b = tree.add_child(0, child_state(&root, "<query>b</query>"), Some(0.2));
        tree.node_mut(a).q_value = 0.5;
        tree.node_mut(a).visit_count = 1;
        tree.node_mut(b).q_value = 0.2;
        // A: 0.5 + 1/2 = 1.0, B: 0.2 + 1/1 = 1.2
        assert!((uct_score(0.5, 1, 1, 1.0) - 1.0).abs() < 1e-12);
        assert!((uct_score(0.2, 0, 1, 1.0) - 1.2).abs() < 1e-12);
        assert_eq!(select_child(&tree, 0, 1.0).unwrap(), b);
    }

    #[test]
    fn uct_single_child_and_ties() {
        let mut tree = Tree::new("q", vec![]);
        assert!(matches!(
            select_child(&tree, 0, 1.0),
            Err(MctsError::NoChildren)
        ));
        let root = tree.root().state.clone();
        let a = tree.add_child(0, child_state(&root, "<query>a</query>"), None);
        assert_eq!(select_child(&tree, 0, 1.0).unwrap(), a);
        let _b = tree.add_child(0, child_state(&root, "<query>b</query>"), None);
        assert_eq!(select_child(&tree, 0, 1.0).unwrap(), a);
    }

    #[test]
    fn spre_hand_case() {
        let samples = [Sample { v: 1.0, steps: 2 }, Sample { v: 0.5, steps: 4 }];
        assert!((discounted_mean(&samples, 0.9) - 0.569025).abs() < 1e-12);
    }

    #[test]
    fn backprop_without_decay() {
        let mut tree = Tree::new("q", vec![]);
        let root = tree.root().state.clone();
        let a = tree.add_child(0, child_state(&root, "<query>a</query>"), None);
        backpropagate(&mut tree, &[0, a], 1.0, 7, 1.0);
        for id in [0, a] {
            assert_eq!(tree.node(id).q_value, 1.0);
            assert_eq!(tree.node(id).visit_count, 1);
        }
    }

    /// Appends `raws` below `from`, returning the new leaf. Only the leaf is
    /// scored.
    fn grow(tree: &mut Tree, from: NodeId, raws: &[&str], leaf_value: f64) -> NodeId {
        let mut cur = from;
        for (i, raw) in raws.iter().enumerate() {
            let state = child_state(&tree.node(cur).state, raw);
            let value = (i + 1 == raws.len()).then_some(leaf_value);
            cur = tree.add_child(cur, state, value);
        }
        cur
    }

    #[test]
    fn longer_correct_branch_is_discounted_by_alpha_squared() {
        let mut tree = Tree::new("q", golds());
        let short = grow(
            &mut tree,
            0,
            &[
                "<query>a</query>",
                "<evidence>e</evidence>",
                "<answer>Il Coraggio</answer>",
            ],
            1.0,
        );
        let long = grow(
            &mut tree,
            0,
            &[
                "<query>b</query>",
                "<evidence>e</evidence>",
                "<query>c</query>",
                "<evidence>f</evidence>",
                "<answer>Il Coraggio</answer>",
            ],
            1.0,
        );
        {
            let p = tree.path_to(short);
            backpropagate(&mut tree, &p, 1.0, 3, 0.9);
        }
        {
            let p = tree.path_to(long);
            backpropagate(&mut tree, &p, 1.0, 5, 0.9);
        }
        let (first_short, first_long) = (tree.root().children[0], tree.root().children[1]);
        let ratio = tree.node(first_long).q_value / tree.node(first_short).q_value;
        assert!((ratio - 0.81).abs() < 1e-12);
        assert_eq!(tree.root().visit_count, 2);
    }

    #[test]
    fn config_bounds() {
        assert!(MctsConfig::default().validate().is_ok());
        for cfg in [
            MctsConfig {
                alpha: 0.0,
                ..Default::default()
            },
            MctsConfig {
                alpha: 1.5,
                ..Default::default()
            },
            MctsConfig {
                c_uct: 0.0,
                ..Default::default()
            },
            MctsConfig {
                iterations: 0,
                ..Default::default()
            },
            MctsConfig {
                judge_fallback_v: 2.0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    /// Root alternates between the gold answer and an off-topic query; the
    /// judge scores every intermediate state 0.2.
    fn answer_or_detour() -> impl PolicyBackend {
        let root_calls = AtomicUsize::new(0);
        ClosureBackend::new(move |req: &PolicyRequest| {
            Ok(match req.template {
                TemplateName::Reasoning if !req.user.contains("Previous thoughts") => {
                    if root_calls.fetch_add(1, Ordering::SeqCst).is_multiple_of(2) {
                        "So the answer is <answer>Il Coraggio</answer>".into()
                    } else {
                        "So the next query is <query>weather</query>".into()
                    }
                }
                TemplateName::Reasoning => "So the next query is <query>weather</query>".into(),
                TemplateName::Grounding => "<evidence>None</evidence>".into(),
                TemplateName::ProcessEvaluation => "Off track. So the score is 0.2".into(),
            })
        })
    }

    #[test]
    fn direct_answer_beats_detour() {
        let cfg = MctsConfig {
            iterations: 8,
            ..Default::default()
        };
        let tree = annotate_question(
            "Which film?",
            &golds(),
            &answer_or_detour(),
            &corpus(),
            &cfg,
        )
        .unwrap();
        let root = tree.root();
        assert_eq!(root.visit_count, 8);
        let answer = tree.node(root.children[0]);
        let detour = tree.node(root.children[1]);
        assert_eq!(answer.stage(), Stage::Terminal);
        assert_eq!(answer.terminal_f1, Some(1.0));
        assert!((answer.q_value - 0.9).abs() < 1e-12);
        assert_eq!(detour.stage(), Stage::Grounding);
        assert_eq!(detour.state.pending_query(), Some("weather"));
        assert_eq!(detour.state.pending_docs[0].id, "2");
        assert!(answer.q_value > detour.q_value);
    }

    #[test]
    fn single_iteration() {
        let cfg = MctsConfig {
            iterations: 1,
            ..Default::default()
        };
        let tree = annotate_question(
            "Which film?",
            &golds(),
            &answer_or_detour(),
            &corpus(),
            &cfg,
        )
        .unwrap();
        assert_eq!(tree.len(), 2);
        assert_eq!(tree.root().visit_count, 1);
    }

    #[test]
    fn judge_score_becomes_first_sample() {
        let backend = ClosureBackend::new(|req: &PolicyRequest| {
            Ok(match req.template {
                TemplateName::ProcessEvaluation => "So the score is 88.".into(),
                _ => "<query>Il Coraggio</query>".into(),
            })
        });
        let cfg = MctsConfig {
            iterations: 1,
            ..Default::default()
        };
        let tree = annotate_question("q", &golds(), &backend, &corpus(), &cfg).unwrap();
        let child = tree.node(1);
        assert_eq!(child.samples, vec![Sample { v: 0.88, steps: 1 }]);
        assert_eq!(child.value, Some(0.88));
    }

    #[test]
    fn unparsable_judge_uses_fallback() {
        let backend = ClosureBackend::new(|req: &PolicyRequest| {
            Ok(match req.template {
                TemplateName::ProcessEvaluation => "no idea".into(),
                _ => "<query>Il Coraggio</query>".into(),
            })
        });
        let cfg = MctsConfig {
            iterations: 1,
            judge_fallback_v: 0.0,
            ..Default::default()
        };
        let tree = annotate_question("q", &golds(), &backend, &corpus(), &cfg).unwrap();
        assert_eq!(tree.node(1).value, Some(0.0));
    }

    #[test]
    fn root_failure_is_annotation_failure() {
        let backend = ClosureBackend::new(|_: &PolicyRequest| Ok("garbage".to_string()));
        let err = annotate_question("q", &golds(), &backend, &corpus(), &MctsConfig::default())
            .unwrap_err();
        assert!(matches!(err, MctsError::AnnotationFailed(_)));
    }

    #[test]
    fn later_failures_mark_node_exhausted() {
        // First root call answers; afterwards every reasoning reply is garbage.
        let calls = AtomicUsize::new(0);
        let backend = ClosureBackend::new(move |_: &PolicyRequest| {
            Ok(if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                "<answer>Il Coraggio</answer>".to_string()
            } else {
                "garbage".to_string()
            })
        });
        let cfg = MctsConfig {
            iterations: 5,
            ..Default::default()
        };
        let tree = annotate_question("q", &golds(), &backend, &corpus(), &cfg).unwrap();
        assert!(tree.root().exhausted);
        assert_eq!(tree.root().children.len(), 1);
        assert_eq!(tree.root().visit_count, 5);
    }

    fn check_invariants(tree: &Tree, cfg: &MctsConfig) {
        for node in tree.nodes() {
            assert_eq!(node.visit_count, node.samples.len());
            let fold = node
                .samples
                .iter()
                .fold(0.0, |acc, s| acc + s.v * cfg.alpha.powf(s.steps as f64))
                / node.samples.len().max(1) as f64;
            assert!((node.q_value - fold).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&node.q_value));
            assert_eq!(node.terminal_f1.is_some(), node.stage() == Stage::Terminal);
            if let Some(p) = node.parent {
                let parent = tree.node(p);
                let action = node.action().unwrap();
                assert!(action.kind.is_legal_in(parent.stage()));
                assert_eq!(&node.state.steps[..parent.depth()], &parent.state.steps[..]);
                // a parent is visited at least as often as its children combined
                let child_visits: usize = parent
                    .children
                    .iter()
                    .map(|&c| tree.node(c).visit_count)
                    .sum();
                assert!(parent.visit_count >= child_visits);
            }
        }
    }

    #[test]
    fn invariants_after_random_runs() {
        for seed in 0..20u64 {
            let counter = AtomicUsize::new(0);
            let backend = ClosureBackend::new(move |req: &PolicyRequest| {
                let n = counter.fetch_add(1, Ordering::SeqCst) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 10_007 + n);
                Ok(match req.template {
                    TemplateName::Reasoning => match rng.gen_range(0..3) {
                        0 => "<answer>Il Coraggio</answer>".to_string(),
                        1 => "<answer>Shark Monroe</answer>".to_string(),
                        _ => format!("<query>film {}</query>", rng.gen_range(0..4)),
                    },
                    TemplateName::Grounding => {
                        format!("<evidence>fact {}</evidence>", rng.gen_range(0..3))
                    }
                    TemplateName::ProcessEvaluation => {
                        format!("So the score is {}", rng.gen_range(0..=100))
                    }
                })
            });
            let cfg = MctsConfig {
                iterations: 30,
                alpha: 0.5 + (seed as f64) / 40.0,
                max_depth: 6,
                ..Default::default()
            };
            let tree = annotate_question("q", &golds(), &backend, &corpus(), &cfg).unwrap();
            assert_eq!(tree.root().visit_count, 30);
            check_invariants(&tree, &cfg);
        }
    }
}
