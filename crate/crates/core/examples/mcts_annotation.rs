//! Annotates one question with tree search and prints the resulting tree.

use steprag::mcts::annotate_question;
use steprag::retrieval::{Bm25Params, CorpusIndex};
use steprag::synthetic::{PolicyStyle, TwoHopWorld, WorldPolicy};
use steprag::MctsConfig;

fn main() {
    let world = TwoHopWorld::generate(1);
    let gold = &world.gold()[0];
    let index = CorpusIndex::build(world.documents(), Bm25Params::default());
    let policy = WorldPolicy::new(PolicyStyle::Explorer);
    let cfg = MctsConfig {
        iterations: 30,
        max_children: 2,
        ..MctsConfig::default()
    };

    let tree = annotate_question(&gold.question, &gold.golden_answers, &policy, &index, &cfg)
        .expect("annotation");
    println!("{}", gold.question);
    for node in tree.nodes() {
        let indent = "  ".repeat(node.depth());
        let text = node
            .action()
            .map(|a| a.raw_text.as_str())
            .unwrap_or("(root)");
        println!(
            "{indent}#{} N={} Q={:.3} {text}",
            node.id, node.visit_count, node.q_value
        );
    }
}
