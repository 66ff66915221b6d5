//! Run configuration: one TOML document plus command-line overrides.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The backend auth token is read from [`TOKEN_ENV_VAR`] only.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{PairMode, DEFAULT_GAP_THRESHOLD};
use crate::inference::InferenceConfig;
use crate::mcts::MctsConfig;
use crate::policy::{HttpBackendConfig, PolicyParams, DEFAULT_ANSWER_FORMAT};
use crate::retrieval::{RemoteRetrieverConfig, DEFAULT_TOP_K};

pub const TOKEN_ENV_VAR: &str = "STEPRAG_API_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// JSONL script for the scripted backend.
    pub script: Option<PathBuf>,
    /// Fail on requests the script does not cover.
    pub strict: bool,
    pub default_reply: Option<String>,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: usize,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub judge_max_output_tokens: u32,
    pub answer_format: String,
    pub malformed_retries: usize,
    /// Record every backend exchange to this JSONL script.
    pub record_to: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        let http = HttpBackendConfig::default();
        let policy = PolicyParams::default();
        BackendSection {
            kind: BackendKind::Scripted,
            script: None,
            strict: true,
            default_reply: None,
            endpoint: http.endpoint,
            model: http.model,
            timeout_secs: http.timeout_secs,
            max_retries: http.max_retries,
            backoff_base_ms: http.backoff_base_ms,
            max_in_flight: http.max_in_flight,
            temperature: policy.temperature,
            max_output_tokens: policy.max_output_tokens,
            judge_max_output_tokens: policy.judge_max_output_tokens,
            answer_format: DEFAULT_ANSWER_FORMAT.to_owned(),
            malformed_retries: policy.malformed_retries,
            record_to: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverSection {
    pub kind: RetrieverKind,
    pub corpus_path: Option<PathBuf>,
    /// Index cache; defaults to `<corpus_path>.index.json`.
    pub index_path: Option<PathBuf>,
    pub endpoint: String,
    pub timeout_secs: f64,
    pub k: usize,
}

impl Default for RetrieverSection {
    fn default() -> Self {
        RetrieverSection {
            kind: RetrieverKind::Local,
            corpus_path: None,
            index_path: None,
            endpoint: String::new(),
            timeout_secs: 30.0,
            k: DEFAULT_TOP_K,
        }
    }
}

impl RetrieverSection {
    pub fn index_cache_path(&self) -> Option<PathBuf> {
        self.index_path.clone().or_else(|| {
            self.corpus_path.as_ref().map(|c| {
                let mut name = c.file_name().map(|n| n.to_os_string()).unwrap_or_default();
                name.push(".index.json");
                c.with_file_name(name)
            })
        })
    }

    pub fn remote(&self) -> RemoteRetrieverConfig {
        RemoteRetrieverConfig {
            endpoint: self.endpoint.clone(),
            timeout_secs: self.timeout_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MctsSection {
    pub c_uct: f64,
    pub alpha: f64,
    pub max_children: usize,
    pub iterations: usize,
    pub max_depth: usize,
    pub judge_fallback_v: f64,
}

impl Default for MctsSection {
    fn default() -> Self {
        let d = MctsConfig::default();
        MctsSection {
            c_uct: d.c_uct,
            alpha: d.alpha,
            max_children: d.max_children,
            iterations: d.iterations,
            max_depth: d.max_depth,
            judge_fallback_v: d.judge_fallback_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub max_rounds: usize,
    pub record_transcript: bool,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let d = InferenceConfig::default();
        InferenceSection {
            max_rounds: d.max_rounds,
            record_transcript: d.record_transcript,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub theta: f64,
    pub mode: PairMode,
    pub dpo_beta: f64,
    pub source: String,
    pub trees_dir: PathBuf,
    pub pairs_path: PathBuf,
    pub stats_path: PathBuf,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            theta: DEFAULT_GAP_THRESHOLD,
            mode: PairMode::BestWorst,
            dpo_beta: 0.1,
            source: "local".into(),
            trees_dir: "trees".into(),
            pairs_path: "pairs.jsonl".into(),
            stats_path: "stats.json".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub gold_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub parallelism: usize,
    pub backend: BackendSection,
    pub retriever: RetrieverSection,
    pub mcts: MctsSection,
    pub inference: InferenceSection,
    pub dataset: DatasetSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            parallelism: 1,
            backend: BackendSection::default(),
            retriever: RetrieverSection::default(),
            mcts: MctsSection::default(),
            inference: InferenceSection::default(),
            dataset: DatasetSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<usize>,
    pub max_rounds: Option<usize>,
    pub alpha: Option<f64>,
    pub c_uct: Option<f64>,
    pub theta: Option<f64>,
    pub iterations: Option<usize>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })
    }

    /// Reads and validates a config file, resolving relative paths and
    /// checking that referenced input files exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            self.backend.script.as_mut(),
            self.backend.record_to.as_mut(),
            self.retriever.corpus_path.as_mut(),
            self.retriever.index_path.as_mut(),
            self.eval.gold_path.as_mut(),
            Some(&mut self.dataset.trees_dir),
            Some(&mut self.dataset.pairs_path),
            Some(&mut self.dataset.stats_path),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.k {
            self.retriever.k = k;
        }
        if let Some(v) = o.max_rounds {
            self.inference.max_rounds = v;
        }
        if let Some(v) = o.alpha {
            self.mcts.alpha = v;
        }
        if let Some(v) = o.c_uct {
            self.mcts.c_uct = v;
        }
        if let Some(v) = o.theta {
            self.dataset.theta = v;
        }
        if let Some(v) = o.iterations {
            self.mcts.iterations = v;
        }
        if let Some(v) = o.parallelism {
            self.parallelism = v;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, p) in [
            ("backend.script", &self.backend.script),
            ("retriever.corpus_path", &self.retriever.corpus_path),
            ("eval.gold_path", &self.eval.gold_path),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        if self.backend.kind == BackendKind::Scripted
            && self.backend.script.is_none()
            && self.backend.default_reply.is_none()
        {
            return bad("scripted backend needs backend.script or backend.default_reply".into());
        }
        if self.backend.kind == BackendKind::Http && self.backend.endpoint.is_empty() {
            return bad("http backend needs backend.endpoint".into());
        }
        match self.retriever.kind {
            RetrieverKind::Local if self.retriever.corpus_path.is_none() => {
                return bad("local retriever needs retriever.corpus_path".into())
            }
            RetrieverKind::Remote if self.retriever.endpoint.is_empty() => {
                return bad("remote retriever needs retriever.endpoint".into())
            }
            _ => {}
        }
        if self.retriever.k == 0 {
            return bad("retriever.k must be >= 1".into());
        }
        if self.inference.max_rounds == 0 {
            return bad("inference.max_rounds must be >= 1".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be >= 1".into());
        }
        if self.dataset.theta.is_nan() || self.dataset.theta <= 0.0 {
            return bad("dataset.theta must be > 0".into());
        }
        if !(0.0..=2.0).contains(&self.backend.temperature) {
            return bad("backend.temperature must be in [0, 2]".into());
        }
        self.mcts_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            temperature: self.backend.temperature,
            max_output_tokens: self.backend.max_output_tokens,
            judge_max_output_tokens: self.backend.judge_max_output_tokens,
            seed: self.seed,
            answer_format: self.backend.answer_format.clone(),
            malformed_retries: self.backend.malformed_retries,
        }
    }

    pub fn mcts_config(&self) -> MctsConfig {
        MctsConfig {
            c_uct: self.mcts.c_uct,
            alpha: self.mcts.alpha,
            max_children: self.mcts.max_children,
            iterations: self.mcts.iterations,
            max_depth: self.mcts.max_depth,
            judge_fallback_v: self.mcts.judge_fallback_v,
            top_k: self.retriever.k,
            policy: self.policy_params(),
        }
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            max_rounds: self.inference.max_rounds,
            top_k: self.retriever.k,
            record_transcript: self.inference.record_transcript,
            policy: self.policy_params(),
        }
    }

    /// HTTP settings with the token taken from the environment.
    pub fn http_config(&self) -> HttpBackendConfig {
        HttpBackendConfig {
            endpoint: self.backend.endpoint.clone(),
            model: self.backend.model.clone(),
            api_token: std::env::var(TOKEN_ENV_VAR).ok().filter(|t| !t.is_empty()),
            timeout_secs: self.backend.timeout_secs,
            max_retries: self.backend.max_retries,
            backoff_base_ms: self.backend.backoff_base_ms,
            max_in_flight: self.backend.max_in_flight,
        }
    }
}
