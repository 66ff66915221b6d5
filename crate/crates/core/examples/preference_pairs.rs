//! Annotates a few questions, extracts preference pairs, exports them and prints stats.

use steprag::dataset::{export_dataset, DatasetMetadata};
use steprag::mcts::annotate_question;
use steprag::retrieval::{Bm25Params, CorpusIndex};
use steprag::synthetic::{PolicyStyle, TwoHopWorld, WorldPolicy};
use steprag::{compute_stats, extract_pairs, prune_tree, MctsConfig, PairMode};

fn main() {
    let world = TwoHopWorld::generate(4);
    let index = CorpusIndex::build(world.documents(), Bm25Params::default());
    let policy = WorldPolicy::new(PolicyStyle::Explorer);
    let cfg = MctsConfig {
        iterations: 30,
        max_children: 2,
        ..MctsConfig::default()
    };
    let theta = 0.01;

    let mut pairs = Vec::new();
    let mut trees = Vec::new();
    for g in world.gold() {
        let tree = annotate_question(&g.question, &g.golden_answers, &policy, &index, &cfg)
            .expect("annotation");
        let pruned = prune_tree(&tree).expect("some branch answered");
        pairs.extend(extract_pairs(
            &pruned,
            theta,
            PairMode::BestWorst,
            "synthetic",
        ));
        trees.push(pruned);
    }

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("pairs.jsonl");
    let meta = DatasetMetadata {
        alpha: cfg.alpha,
        c_uct: cfg.c_uct,
        theta,
        iterations: cfg.iterations,
        mode: PairMode::BestWorst,
        dpo_beta: 0.1,
        pair_count: 0,
    };
    export_dataset(&pairs, &path, &meta).expect("export");
    println!("wrote {} pairs to {}", pairs.len(), path.display());

    let first = &pairs[0];
    println!(
        "example pair ({}, gap {:.3}):",
        first.pair_type,
        first.gap()
    );
    println!("  chosen   {}", first.chosen.raw_text);
    println!("  rejected {}", first.rejected.raw_text);
    println!();
    print!("{}", compute_stats(&pairs, &trees).render_table());
}
