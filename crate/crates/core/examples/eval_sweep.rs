//! Scores answers with EM/F1 and sweeps the retrieval depth.

use steprag::eval::{sweep, SweepAxis};
use steprag::inference::InferenceConfig;
use steprag::retrieval::{Bm25Params, CorpusIndex};
use steprag::synthetic::{PolicyStyle, TwoHopWorld, WorldPolicy};
use steprag::{exact_match, f1_score, normalize};

fn main() {
    let golds = ["the Red Fox"];
    for pred in ["red fox", "A red fox!", "fox", "blue jay"] {
        println!(
            "{pred:>12}: normalized {:?} EM {} F1 {:.3}",
            normalize(pred),
            exact_match(pred, &golds),
            f1_score(pred, &golds)
        );
    }

    let world = TwoHopWorld::generate(10);
    let index = CorpusIndex::build(world.documents(), Bm25Params::default());
    let policy = WorldPolicy::new(PolicyStyle::Oracle);
    let rows = sweep(
        SweepAxis::TopK,
        &[1, 2, 3],
        &world.gold(),
        &policy,
        &index,
        &InferenceConfig::default(),
        2,
    )
    .expect("sweep");
    println!("\ntop-k  EM     F1");
    for r in rows {
        println!("{:>5}  {:5.1}  {:5.1}", r.value, r.em, r.f1);
    }
}
