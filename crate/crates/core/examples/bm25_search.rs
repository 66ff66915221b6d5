//! Builds a BM25 index over a few documents, searches it and round-trips the cache.

use steprag::retrieval::{Bm25Params, CorpusIndex, Document, Retriever};

fn main() {
    let docs = vec![
        Document::new("d1", "Lake Orvan", "Lake Orvan lies in the Tesk valley."),
        Document::new("d2", "Tesk", "Tesk is a valley town famous for glass."),
        Document::new("d3", "Glass", "Glass is made from sand."),
    ];
    let index = CorpusIndex::build(docs, Bm25Params::default());
    println!(
        "{} docs, avg length {:.2}",
        index.doc_count(),
        index.avg_doc_length()
    );

    for query in ["Tesk valley", "glass sand", "volcano"] {
        let hits = index.retrieve(query, 2).expect("local search");
        let ids: Vec<String> = hits
            .iter()
            .map(|d| format!("{}:{:.3}", d.id, d.score))
            .collect();
        println!("{query:>12} -> [{}]", ids.join(", "));
    }

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("index.json");
    index.save(&path).expect("save");
    let loaded = CorpusIndex::load(&path).expect("load");
    assert_eq!(loaded.to_json(), index.to_json());
    println!("cache round trip ok ({} bytes)", index.to_json().len());
}
