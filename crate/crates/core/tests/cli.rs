//! End-to-end runs of the `steprag` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use steprag::mcts::annotate_question;
use steprag::policy::RecordingBackend;
use steprag::retrieval::{Bm25Params, CorpusIndex};
use steprag::synthetic::{PolicyStyle, TwoHopWorld, WorldPolicy};
use steprag::RunConfig;

const BASE: &str = "seed = 3
parallelism = 2

[backend]
kind = \"scripted\"
script = \"script.jsonl\"

[retriever]
corpus_path = \"corpus.jsonl\"
k = 3

[mcts]
iterations = 30
max_children = 2

[inference]
max_rounds = 10

[eval]
gold_path = \"gold.jsonl\"
";

fn steprag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steprag"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A temp dir holding an `n`-question world, its gold file and `config.toml`.
fn workspace(n: usize) -> (tempfile::TempDir, TwoHopWorld) {
    let dir = tempfile::tempdir().unwrap();
    let world = TwoHopWorld::generate(n);
    fs::write(dir.path().join("corpus.jsonl"), world.corpus_jsonl()).unwrap();
    fs::write(dir.path().join("gold.jsonl"), world.gold_jsonl()).unwrap();
    fs::write(dir.path().join("config.toml"), BASE).unwrap();
    (dir, world)
}

fn record_inference(dir: &Path, world: &TwoHopWorld, style: PolicyStyle) {
    let index = CorpusIndex::build(world.documents(), Bm25Params::default());
    let recorder = RecordingBackend::new(WorldPolicy::new(style));
    let questions: Vec<String> = world.items.iter().map(|it| it.question()).collect();
    let cfg = steprag::InferenceConfig {
        top_k: 3,
        max_rounds: 10,
        ..Default::default()
    };
    for r in steprag::run_batch(&questions, &recorder, &index, &cfg, 1) {
        r.unwrap();
    }
    recorder.write_script(dir.join("script.jsonl")).unwrap();
}

#[test]
fn index_reports_count_and_is_stable() {
    let (dir, _) = workspace(2);
    fs::write(dir.path().join("script.jsonl"), "").unwrap();
    let out = steprag(dir.path(), &["index", "--config", "config.toml"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "indexed 6 documents");
    let cache = dir.path().join("corpus.jsonl.index.json");
    let first = fs::read(&cache).unwrap();
    steprag(dir.path(), &["index", "--config", "config.toml"]);
    assert_eq!(fs::read(&cache).unwrap(), first);
}

#[test]
fn index_rejects_duplicate_ids() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("dup.jsonl"),
        "{\"id\":\"a\",\"contents\":\"x\"}\n{\"id\":\"a\",\"contents\":\"y\"}\n",
    )
    .unwrap();
    let out = steprag(dir.path(), &["index", "--corpus", "dup.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn missing_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = steprag(
        dir.path(),
        &["infer", "--questions", "q.jsonl", "--out", "t.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infer_then_eval() {
    let (dir, world) = workspace(3);
    record_inference(dir.path(), &world, PolicyStyle::Oracle);
    let out = steprag(
        dir.path(),
        &[
            "infer",
            "--config",
            "config.toml",
            "--questions",
            "gold.jsonl",
            "--out",
            "t.jsonl",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "3 transcripts, 3 answered, 0 failed");
    let lines: Vec<String> = fs::read_to_string(dir.path().join("t.jsonl"))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    for (line, item) in lines.iter().zip(&world.items) {
        assert!(line.contains(&item.question()), "transcripts out of order");
    }
    let out = steprag(
        dir.path(),
        &[
            "eval",
            "--config",
            "config.toml",
            "--transcripts",
            "t.jsonl",
        ],
    );
    assert_eq!(stdout(&out).trim(), "EM 100.0 F1 100.0");
}

#[test]
fn round_cap_override_stops_early() {
    let (dir, world) = workspace(2);
    record_inference(dir.path(), &world, PolicyStyle::Oracle);
    let out = steprag(
        dir.path(),
        &[
            "infer",
            "--config",
            "config.toml",
            "--questions",
            "gold.jsonl",
            "--out",
            "t.jsonl",
            "--max-rounds",
            "1",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "2 transcripts, 0 answered, 0 failed");
}

#[test]
fn eval_against_fixture() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("gold.jsonl"),
        "{\"id\":1,\"question\":\"a?\",\"golden_answers\":[\"red fox\"]}\n\
         {\"id\":2,\"question\":\"b?\",\"golden_answers\":[\"blue\"]}\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("t.jsonl"),
        "{\"question\":\"a?\",\"steps\":[],\"retrievals\":[],\"final_answer\":\"red\",\"rounds_used\":1}\n\
         {\"question\":\"b?\",\"steps\":[],\"retrievals\":[],\"final_answer\":\"Blue.\",\"rounds_used\":1}\n",
    )
    .unwrap();
    let out = steprag(
        dir.path(),
        &["eval", "--transcripts", "t.jsonl", "--gold", "gold.jsonl"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "EM 50.0 F1 83.3");

    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = steprag(
        dir.path(),
        &[
            "eval",
            "--transcripts",
            "empty.jsonl",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    fs::write(
        dir.path().join("stray.jsonl"),
        "{\"question\":\"c?\",\"steps\":[],\"retrievals\":[],\"final_answer\":\"x\",\"rounds_used\":1}\n",
    )
    .unwrap();
    let out = steprag(
        dir.path(),
        &[
            "eval",
            "--transcripts",
            "stray.jsonl",
            "--gold",
            "gold.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_over_rounds() {
    let (dir, world) = workspace(2);
    record_inference(dir.path(), &world, PolicyStyle::Oracle);
    let out = steprag(
        dir.path(),
        &[
            "sweep",
            "--config",
            "config.toml",
            "--axis",
            "rounds",
            "--values",
            "1,5",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert!(rows[0].starts_with("1,0"), "{text}");
    assert!(rows[1].starts_with("5,100"), "{text}");
}

fn record_annotation(dir: &Path, world: &TwoHopWorld) {
    let cfg = RunConfig::from_toml_str(BASE, "config.toml").unwrap();
    let index = CorpusIndex::build(world.documents(), Bm25Params::default());
    let recorder = RecordingBackend::new(WorldPolicy::new(PolicyStyle::Explorer));
    for g in world.gold() {
        annotate_question(
            &g.question,
            &g.golden_answers,
            &recorder,
            &index,
            &cfg.mcts_config(),
        )
        .unwrap();
    }
    recorder.write_script(dir.join("script.jsonl")).unwrap();
}

#[test]
fn annotate_writes_trees_pairs_and_stats() {
    let (dir, world) = workspace(2);
    record_annotation(dir.path(), &world);
    let out = steprag(
        dir.path(),
        &[
            "annotate",
            "--config",
            "config.toml",
            "--questions",
            "gold.jsonl",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).starts_with("annotated 2/2 questions"),
        "{}",
        stdout(&out)
    );
    let trees: Vec<_> = fs::read_dir(dir.path().join("trees")).unwrap().collect();
    assert_eq!(trees.len(), 2);
    let pairs = fs::read_to_string(dir.path().join("pairs.jsonl")).unwrap();
    assert!(pairs.lines().count() >= 1);
    assert!(dir.path().join("pairs.jsonl.meta.json").exists());
    assert!(dir.path().join("stats.json").exists());

    let first = pairs.clone();
    let out = steprag(
        dir.path(),
        &[
            "annotate",
            "--config",
            "config.toml",
            "--questions",
            "gold.jsonl",
        ],
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("pairs.jsonl")).unwrap(),
        first
    );

    let out = steprag(
        dir.path(),
        &["stats", "--pairs", "pairs.jsonl", "--trees", "trees"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("Questions                         2"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn annotate_with_empty_script_fails_every_question() {
    let (dir, _) = workspace(2);
    fs::write(dir.path().join("script.jsonl"), "").unwrap();
    let out = steprag(
        dir.path(),
        &[
            "annotate",
            "--config",
            "config.toml",
            "--questions",
            "gold.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn stats_on_empty_and_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = steprag(dir.path(), &["stats", "--pairs", "empty.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("Pairs                             0"));

    fs::write(dir.path().join("bad.jsonl"), "{\"question\":\"q\"}\n").unwrap();
    let out = steprag(dir.path(), &["stats", "--pairs", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}
