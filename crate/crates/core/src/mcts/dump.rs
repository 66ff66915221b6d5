//! JSON form of an annotated tree.

use serde::{Deserialize, Serialize};

use super::{Sample, Tree, TreeNode};
use crate::agent::{transition, ActionKind, ActionStep, AgentState, Stage};
use crate::retrieval::Document;

pub const DUMP_FORMAT: &str = "steprag-tree-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDump {
    pub kind: ActionKind,
    pub payload: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: usize,
    pub parent_id: Option<usize>,
    pub action: Option<ActionDump>,
    #[serde(rename = "N")]
    pub visit_count: usize,
    #[serde(rename = "Q")]
    pub q_value: f64,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_f1: Option<f64>,
    pub samples: Vec<Sample>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exhausted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub docs: Vec<Document>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub format: String,
    pub question: String,
    pub golden_answers: Vec<String>,
    pub nodes: Vec<NodeDump>,
}

impl From<&Tree> for TreeDump {
    fn from(tree: &Tree) -> Self {
        TreeDump {
            format: DUMP_FORMAT.to_owned(),
            question: tree.question().to_owned(),
            golden_answers: tree.golden_answers.clone(),
            nodes: tree
                .nodes()
                .iter()
                .map(|n| NodeDump {
                    id: n.id,
                    parent_id: n.parent,
                    action: n.parent.and(n.action()).map(|a| ActionDump {
                        kind: a.kind,
                        payload: a.payload.clone(),
                        raw_text: a.raw_text.clone(),
                    }),
                    visit_count: n.visit_count,
                    q_value: n.q_value,
                    stage: n.stage(),
                    value: n.value,
                    terminal_f1: n.terminal_f1,
                    samples: n.samples.clone(),
                    exhausted: n.exhausted,
                    docs: n.state.pending_docs.clone(),
                })
                .collect(),
        }
    }
}

impl TreeDump {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree dump serializes")
    }

    /// Rebuilds the tree, replaying every action through the state machine.
    /// Nodes must be listed parents-first with `id` equal to list position.
    pub fn into_tree(self) -> Result<Tree, String> {
        if self.format != DUMP_FORMAT {
            return Err(format!("unsupported tree format {:?}", self.format));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(self.nodes.len());
        for (pos, d) in self.nodes.into_iter().enumerate() {
            if d.id != pos {
                return Err(format!("node id {} at position {pos}", d.id));
            }
            let state = match (d.parent_id, d.action) {
                (None, None) if pos == 0 => AgentState::new(self.question.clone()),
                (Some(p), Some(a)) if p < pos => {
                    let parent = &nodes[p].state;
                    let step = ActionStep {
                        kind: a.kind,
                        raw_text: a.raw_text,
                        payload: a.payload,
                        index: parent.steps.len(),
                    };
                    let mut state =
                        transition(parent, step).map_err(|e| format!("node {pos}: {e}"))?;
                    if !d.docs.is_empty() {
                        state = state.with_docs(d.docs);
                    }
                    state
                }
                _ => return Err(format!("node {pos}: inconsistent parent/action")),
            };
            if state.stage != d.stage {
                return Err(format!(
                    "node {pos}: stage {} does not match replay",
                    d.stage
                ));
            }
            if let Some(p) = d.parent_id {
                nodes[p].children.push(pos);
            }
            nodes.push(TreeNode {
                id: pos,
                parent: d.parent_id,
                children: Vec::new(),
                state,
                visit_count: d.visit_count,
                q_value: d.q_value,
                samples: d.samples,
                value: d.value,
                terminal_f1: d.terminal_f1,
                exhausted: d.exhausted,
            });
        }
        if nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        Ok(Tree::from_nodes(self.golden_answers, nodes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::parse_action;
    use crate::mcts::backpropagate;

    #[test]
    fn dump_round_trip() {
        let mut tree = Tree::new("q", vec!["x".into()]);
        let q = parse_action("<query>a</query>", Stage::Reasoning).unwrap();
        let s1 = transition(&tree.root().state, q)
            .unwrap()
            .with_docs(vec![Document::new("d1", "T", "contents")]);
        let c1 = tree.add_child(0, s1, Some(0.3));
        let e = parse_action("<evidence>None</evidence>", Stage::Grounding).unwrap();
        let s2 = transition(&tree.node(c1).state, e).unwrap();
        let c2 = tree.add_child(c1, s2, Some(0.1));
        let a = parse_action("<answer>x</answer>", Stage::Reasoning).unwrap();
        let s3 = transition(&tree.root().state, a).unwrap();
        let c3 = tree.add_child(0, s3, Some(1.0));
        backpropagate(&mut tree, &[0, c1, c2], 0.1, 2, 0.9);
        backpropagate(&mut tree, &[0, c3], 1.0, 1, 0.9);

        let dump = TreeDump::from(&tree);
        let text = dump.to_json();
        assert!(text.contains("\"N\": 2"));
        let back: TreeDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_tree().unwrap(), tree);
    }

    #[test]
    fn rejects_illegal_edges() {
        let mut dump = TreeDump::from(&Tree::new("q", vec![]));
        dump.nodes.push(NodeDump {
            id: 1,
            parent_id: Some(0),
            action: Some(ActionDump {
                kind: ActionKind::EvidenceExtraction,
                payload: "e".into(),
                raw_text: "<evidence>e</evidence>".into(),
            }),
            visit_count: 0,
            q_value: 0.0,
            stage: Stage::Reasoning,
            value: None,
            terminal_f1: None,
            samples: vec![],
            exhausted: false,
            docs: vec![],
        });
        assert!(dump.into_tree().is_err());
    }
}
