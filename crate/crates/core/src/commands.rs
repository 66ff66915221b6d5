//! Command-line surface.
//!
//! Exit codes: 0 success, 1 partial failure, 2 input or config error.

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{BackendKind, Overrides, RetrieverKind, RunConfig};
use crate::dataset::{
    compute_stats, export_dataset, extract_pairs, prune_tree, read_pairs_file, DatasetError,
    DatasetMetadata,
};
use crate::eval::{
    evaluate_run, read_gold_file, sweep, write_sweep_csv, EvalError, GoldEntry, GoldMap,
    Prediction, SweepAxis, SweepSeries,
};
use crate::inference::{read_transcripts, run_batch, write_transcripts, TranscriptRecord};
use crate::mcts::{annotate_question, Tree, TreeDump};
use crate::policy::{HttpBackend, PolicyBackend, RecordingBackend, ScriptedBackend};
use crate::pool::parallel_map;
use crate::retrieval::{CorpusIndex, RemoteRetriever, Retriever};

#[derive(Debug, Parser)]
#[command(
    name = "steprag",
    version,
    about = "Retrieval agent annotation, inference and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Config path and the overrides shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run config
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Documents retrieved per query
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Policy-call budget per question at inference time
    #[arg(long, global = true)]
    pub max_rounds: Option<usize>,
    /// Length discount for value estimates
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Exploration constant for tree search
    #[arg(long, global = true)]
    pub c_uct: Option<f64>,
    /// Minimum reward gap for preference pairs
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Search iterations per question
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            k: self.k,
            max_rounds: self.max_rounds,
            alpha: self.alpha,
            c_uct: self.c_uct,
            theta: self.theta,
            iterations: self.iterations,
            parallelism: self.parallelism,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the BM25 index cache for a JSONL corpus
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run tree search on each question and export trees, pairs and stats
    Annotate {
        /// JSONL with {id, question, golden_answers}
        #[arg(long)]
        questions: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the inference loop and write transcripts
    Infer {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score transcripts against gold answers
    Eval {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Per-question records as JSONL
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-run inference over a range of round caps or top-k values
    Sweep {
        /// rounds or topk
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Gold JSONL; defaults to eval.gold_path
        #[arg(long)]
        questions: Option<PathBuf>,
        /// CSV output; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
        /// Column-oriented JSON series
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Summarize a preference-pair file
    Stats {
        #[arg(long)]
        pairs: PathBuf,
        /// Directory of tree dumps for iteration counts
        #[arg(long)]
        trees: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl std::fmt::Display) -> Self {
        CliError {
            code: 2,
            message: message.to_string(),
        }
    }

    fn partial(message: impl std::fmt::Display) -> Self {
        CliError {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CmdResult = Result<(), CliError>;

/// Runs a parsed command, writing its report to `out`. Returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Index {
            corpus,
            out: dest,
            common,
        } => cmd_index(corpus, dest, &common, out),
        Command::Annotate { questions, common } => cmd_annotate(&questions, &common, out),
        Command::Infer {
            questions,
            out: dest,
            common,
        } => cmd_infer(&questions, &dest, &common, out),
        Command::Eval {
            transcripts,
            gold,
            out: dest,
            common,
        } => cmd_eval(&transcripts, gold, dest, &common, out),
        Command::Sweep {
            axis,
            values,
            questions,
            out: dest,
            json,
            common,
        } => cmd_sweep(axis, &values, questions, dest, json, &common, out),
        Command::Stats {
            pairs,
            trees,
            json,
            common: _,
        } => cmd_stats(&pairs, trees, json, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn load_config(common: &CommonArgs, required: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(CliError::input)?,
        None if required => return Err(CliError::input("--config is required for this command")),
        None => RunConfig::default(),
    };
    cfg.apply(&common.overrides());
    if common.config.is_some() {
        cfg.validate().map_err(CliError::input)?;
    }
    Ok(cfg)
}

enum Backend {
    Plain(Box<dyn PolicyBackend>),
    Recording(RecordingBackend<Box<dyn PolicyBackend>>, PathBuf),
}

impl Backend {
    fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let inner: Box<dyn PolicyBackend> = match cfg.backend.kind {
            BackendKind::Scripted => {
                let mut backend = match &cfg.backend.script {
                    Some(path) => ScriptedBackend::from_script_file(path, cfg.backend.strict)
                        .map_err(CliError::input)?,
                    None => ScriptedBackend::new(false),
                };
                if let Some(reply) = &cfg.backend.default_reply {
                    backend = backend.with_default_reply(reply.clone());
                }
                Box::new(backend)
            }
            BackendKind::Http => {
                Box::new(HttpBackend::new(cfg.http_config()).map_err(CliError::input)?)
            }
        };
        Ok(match &cfg.backend.record_to {
            Some(path) => Backend::Recording(RecordingBackend::new(inner), path.clone()),
            None => Backend::Plain(inner),
        })
    }

    fn get(&self) -> &dyn PolicyBackend {
        match self {
            Backend::Plain(b) => b.as_ref(),
            Backend::Recording(b, _) => b,
        }
    }

    fn finish(&self) -> CmdResult {
        if let Backend::Recording(b, path) = self {
            b.write_script(path)
                .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn build_retriever(cfg: &RunConfig) -> Result<Box<dyn Retriever>, CliError> {
    match cfg.retriever.kind {
        RetrieverKind::Local => {
            let corpus = cfg
                .retriever
                .corpus_path
                .as_ref()
                .ok_or_else(|| CliError::input("retriever.corpus_path is not set"))?;
            let cache = cfg.retriever.index_cache_path().expect("corpus path set");
            Ok(Box::new(
                CorpusIndex::load_or_build(corpus, cache).map_err(CliError::input)?,
            ))
        }
        RetrieverKind::Remote => Ok(Box::new(
            RemoteRetriever::new(&cfg.retriever.remote()).map_err(CliError::input)?,
        )),
    }
}

fn read_questions(path: &Path) -> Result<Vec<GoldEntry>, CliError> {
    let entries = read_gold_file(path).map_err(CliError::input)?;
    if entries.is_empty() {
        return Err(CliError::input(format!(
            "{} contains no questions",
            path.display()
        )));
    }
    Ok(entries)
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn report(out: &mut dyn Write, line: impl std::fmt::Display) {
    let _ = writeln!(out, "{line}");
}

pub fn cmd_index(
    corpus: Option<PathBuf>,
    dest: Option<PathBuf>,
    common: &CommonArgs,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(common, false)?;
    let corpus = corpus
        .or_else(|| cfg.retriever.corpus_path.clone())
        .ok_or_else(|| CliError::input("no corpus given (--corpus or retriever.corpus_path)"))?;
    let dest = match dest {
        Some(d) => d,
        None => {
            let mut section = cfg.retriever.clone();
            section.corpus_path = Some(corpus.clone());
            section.index_cache_path().expect("corpus path set")
        }
    };
    let index = CorpusIndex::ingest(&corpus).map_err(CliError::input)?;
    index.save(&dest).map_err(CliError::input)?;
    report(out, format!("indexed {} documents", index.doc_count()));
    Ok(())
}

fn tree_file_name(pos: usize, id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{pos:05}_{safe}.json")
}

pub fn cmd_annotate(questions: &Path, common: &CommonArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(common, true)?;
    let entries = read_questions(questions)?;
    let backend = Backend::build(&cfg)?;
    let retriever = build_retriever(&cfg)?;
    let mcts = cfg.mcts_config();

    let trees = parallel_map(&entries, cfg.parallelism, |g| {
        annotate_question(
            &g.question,
            &g.golden_answers,
            backend.get(),
            &retriever,
            &mcts,
        )
    });
    backend.finish()?;

    let trees_dir = &cfg.dataset.trees_dir;
    fs::create_dir_all(trees_dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", trees_dir.display())))?;
    let mut pairs = Vec::new();
    let mut pruned_trees: Vec<Tree> = Vec::new();
    let mut failed = 0;
    for (pos, (entry, result)) in entries.iter().zip(trees).enumerate() {
        let tree = match result {
            Ok(tree) => tree,
            Err(e) => {
                log::error!("question {}: {e}", entry.id);
                failed += 1;
                continue;
            }
        };
        write_text(
            &trees_dir.join(tree_file_name(pos, &entry.id)),
            &(TreeDump::from(&tree).to_json() + "\n"),
        )?;
        match prune_tree(&tree) {
            Ok(pruned) => {
                pairs.extend(extract_pairs(
                    &pruned,
                    cfg.dataset.theta,
                    cfg.dataset.mode,
                    &cfg.dataset.source,
                ));
                pruned_trees.push(pruned);
            }
            Err(e) => {
                log::warn!("question {}: {e}; skipped", entry.id);
                failed += 1;
            }
        }
    }

    let meta = DatasetMetadata {
        alpha: mcts.alpha,
        c_uct: mcts.c_uct,
        theta: cfg.dataset.theta,
        iterations: mcts.iterations,
        mode: cfg.dataset.mode,
        dpo_beta: cfg.dataset.dpo_beta,
        pair_count: pairs.len(),
    };
    if let Some(dir) = cfg.dataset.pairs_path.parent() {
        let _ = fs::create_dir_all(dir);
    }
    export_dataset(&pairs, &cfg.dataset.pairs_path, &meta).map_err(CliError::input)?;
    let stats = compute_stats(&pairs, &pruned_trees);
    write_text(&cfg.dataset.stats_path, &(stats.to_json() + "\n"))?;

    let ok = entries.len() - failed;
    report(
        out,
        format!(
            "annotated {ok}/{} questions, {} pairs",
            entries.len(),
            pairs.len()
        ),
    );
    if ok == 0 {
        return Err(CliError::partial(
            "no question produced an answered trajectory",
        ));
    }
    Ok(())
}

pub fn cmd_infer(
    questions: &Path,
    dest: &Path,
    common: &CommonArgs,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(common, true)?;
    let entries = read_questions(questions)?;
    let backend = Backend::build(&cfg)?;
    let retriever = build_retriever(&cfg)?;
    let texts: Vec<String> = entries.iter().map(|g| g.question.clone()).collect();
    let results = run_batch(
        &texts,
        backend.get(),
        &retriever,
        &cfg.inference_config(),
        cfg.parallelism,
    );
    backend.finish()?;

    let mut failed = 0;
    let transcripts: Vec<_> = results
        .into_iter()
        .zip(&entries)
        .map(|(r, g)| match r {
            Ok(t) => t,
            Err(e) => {
                log::error!("question {}: {e}", g.id);
                failed += 1;
                e.partial()
                    .cloned()
                    .unwrap_or_else(|| crate::agent::Transcript::new(g.question.clone()))
            }
        })
        .collect();
    let answered = transcripts
        .iter()
        .filter(|t| t.final_answer.is_some())
        .count();
    let mut file = create_file(dest)?;
    write_transcripts(&mut file, &transcripts)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", dest.display())))?;
    report(
        out,
        format!(
            "{} transcripts, {answered} answered, {failed} failed",
            transcripts.len()
        ),
    );
    if failed > 0 {
        return Err(CliError::partial(format!("{failed} questions failed")));
    }
    Ok(())
}

pub fn cmd_eval(
    transcripts: &Path,
    gold: Option<PathBuf>,
    dest: Option<PathBuf>,
    common: &CommonArgs,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(common, false)?;
    let gold = gold
        .or(cfg.eval.gold_path)
        .ok_or_else(|| CliError::input("no gold file given (--gold or eval.gold_path)"))?;
    let golds: GoldMap = read_gold_file(&gold)
        .map_err(CliError::input)?
        .into_iter()
        .collect();
    let file = fs::File::open(transcripts)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", transcripts.display())))?;
    let records: Vec<TranscriptRecord> =
        read_transcripts(BufReader::new(file)).map_err(|(line, reason)| {
            CliError::input(format!("{} line {line}: {reason}", transcripts.display()))
        })?;
    let predictions: Vec<Prediction> = records.iter().map(Prediction::from).collect();
    let (scored, agg) = evaluate_run(&predictions, &golds).map_err(|e| match e {
        EvalError::MissingGold(_) | EvalError::EmptyEvaluation => CliError::input(e),
        other => CliError::input(other),
    })?;
    if let Some(dest) = dest {
        let mut f = create_file(&dest)?;
        for r in &scored {
            serde_json::to_writer(&mut f, r).expect("record serializes");
            let _ = f.write_all(b"\n");
        }
        f.flush()
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", dest.display())))?;
    }
    report(out, format!("EM {:.1} F1 {:.1}", agg.em, agg.f1));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    axis: SweepAxis,
    values: &[usize],
    questions: Option<PathBuf>,
    dest: Option<PathBuf>,
    json: Option<PathBuf>,
    common: &CommonArgs,
    out: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(common, true)?;
    let questions = questions
        .or(cfg.eval.gold_path.clone())
        .ok_or_else(|| CliError::input("no questions given (--questions or eval.gold_path)"))?;
    let entries = read_questions(&questions)?;
    let backend = Backend::build(&cfg)?;
    let retriever = build_retriever(&cfg)?;
    let rows = sweep(
        axis,
        values,
        &entries,
        backend.get(),
        &retriever,
        &cfg.inference_config(),
        cfg.parallelism,
    )
    .map_err(CliError::input)?;
    backend.finish()?;
    match dest {
        Some(path) => {
            let mut f = create_file(&path)?;
            write_sweep_csv(&mut f, &rows)
                .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
            for r in &rows {
                report(
                    out,
                    format!("{axis}={} EM {:.1} F1 {:.1}", r.value, r.em, r.f1),
                );
            }
        }
        None => {
            write_sweep_csv(&mut *out, &rows).map_err(CliError::input)?;
        }
    }
    if let Some(path) = json {
        let series = SweepSeries::new(axis, &rows);
        write_text(
            &path,
            &(serde_json::to_string_pretty(&series).expect("series serializes") + "\n"),
        )?;
    }
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    if failures > 0 {
        return Err(CliError::partial(format!(
            "{failures} runs failed across the sweep"
        )));
    }
    Ok(())
}

fn read_tree_dir(dir: &Path) -> Result<Vec<Tree>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut trees = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let dump: TreeDump = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let tree = dump
            .into_tree()
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        match prune_tree(&tree) {
            Ok(pruned) => trees.push(pruned),
            Err(DatasetError::EmptyTree) => log::warn!("{}: no answered branch", path.display()),
            Err(e) => return Err(CliError::input(e)),
        }
    }
    Ok(trees)
}

pub fn cmd_stats(
    pairs: &Path,
    trees: Option<PathBuf>,
    json: Option<PathBuf>,
    out: &mut dyn Write,
) -> CmdResult {
    let pairs =
        read_pairs_file(pairs).map_err(|e| CliError::input(format!("{}: {e}", pairs.display())))?;
    let trees = match trees {
        Some(dir) => read_tree_dir(&dir)?,
        None => Vec::new(),
    };
    let stats = compute_stats(&pairs, &trees);
    if let Some(path) = json {
        write_text(&path, &(stats.to_json() + "\n"))?;
    }
    let _ = out.write_all(stats.render_table().as_bytes());
    Ok(())
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    execute(cli, &mut lock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_shape_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_parse_on_every_subcommand() {
        for sub in ["index", "annotate", "infer", "eval", "sweep", "stats"] {
            let err = Cli::try_parse_from(["steprag", sub, "--help"]).unwrap_err();
            let help = err.to_string();
            for flag in [
                "--config",
                "--k",
                "--max-rounds",
                "--alpha",
                "--c-uct",
                "--theta",
                "--iterations",
                "--parallelism",
                "--seed",
            ] {
                assert!(help.contains(flag), "{sub} lacks {flag}");
            }
        }
    }

    #[test]
    fn tree_file_names_are_safe() {
        assert_eq!(tree_file_name(3, "a/b c"), "00003_a_b_c.json");
    }
}
