//! Runs the inference loop against a deterministic simulated policy.

use steprag::inference::{run, InferenceConfig};
use steprag::retrieval::{Bm25Params, CorpusIndex};
use steprag::synthetic::{PolicyStyle, TwoHopWorld, WorldPolicy};

fn main() {
    let world = TwoHopWorld::generate(3);
    let index = CorpusIndex::build(world.documents(), Bm25Params::default());
    let policy = WorldPolicy::new(PolicyStyle::Oracle);
    let cfg = InferenceConfig::default();

    for item in &world.items {
        let t = run(&item.question(), &policy, &index, &cfg).expect("oracle run");
        println!("{}", item.question());
        for step in &t.steps {
            println!("  {:?}: {}", step.kind, step.raw_text);
        }
        println!(
            "  -> {:?} in {} rounds (gold {})",
            t.final_answer, t.rounds_used, item.city
        );
    }
}
