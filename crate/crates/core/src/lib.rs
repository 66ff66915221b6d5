//! Retrieval-augmented question answering agent with tree-search process
//! reward annotation.
//!
//! The agent moves through reasoning, grounding and terminal stages (see
//! [`agent`]). [`mcts`] grows a search tree per question and scores each
//! step with a length-discounted value; [`dataset`] turns those trees into
//! preference pairs. [`inference`] runs the plain loop and [`eval`] scores
//! its transcripts. Everything that talks to a model goes through
//! [`policy::PolicyBackend`], which has scripted implementations for tests.

pub mod agent;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod inference;
pub mod mcts;
pub mod policy;
mod pool;
pub mod retrieval;
pub mod synthetic;
pub mod text;

pub use agent::{parse_action, transition, ActionKind, ActionStep, AgentState, Stage, Transcript};
pub use config::RunConfig;
pub use dataset::{compute_stats, extract_pairs, prune_tree, PairMode, PreferencePair};
pub use eval::{exact_match, f1_score, normalize};
pub use inference::{run, run_batch, InferenceConfig};
pub use mcts::{annotate_question, MctsConfig, Tree};
pub use policy::{PolicyBackend, ScriptedBackend};
pub use retrieval::{CorpusIndex, Document, Retriever};
