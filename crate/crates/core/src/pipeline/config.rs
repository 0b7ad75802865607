//! Flat `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Ngram,
    Extern,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ngram" => Ok(BackendKind::Ngram),
            "extern" => Ok(BackendKind::Extern),
            other => Err(format!("unknown backend `{other}` (ngram or extern)")),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Ngram => "ngram",
            BackendKind::Extern => "extern",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub source_roots: Vec<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub tokenizer_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub extern_command: Option<String>,
    pub seed: u64,
    pub split_ratio: f64,
    pub inject_rate: f64,
    pub strip_existing_comments: bool,
    pub top_k: usize,
    pub vocab_size: usize,
    pub ngram_order: usize,
    pub max_intent_tokens: usize,
    /// 0 keeps every candidate.
    pub sample_n: usize,
    pub backend: BackendKind,
    pub beam_width: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_context: usize,
    pub call_filter: bool,
    pub per_rater: bool,
    pub record_latency: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("corpus"),
            manifest: PathBuf::from("corpus/manifest.jsonl"),
            output_dir: PathBuf::from("out"),
            source_roots: Vec::new(),
            mapping: None,
            tokenizer_dir: None,
            model: None,
            annotations: None,
            ratings: None,
            benchmark: None,
            predictions: None,
            report_dir: None,
            extern_command: None,
            seed: 0,
            split_ratio: 0.9,
            inject_rate: 0.2,
            strip_existing_comments: false,
            top_k: 250,
            vocab_size: 2000,
            ngram_order: 4,
            max_intent_tokens: 10,
            sample_n: 0,
            backend: BackendKind::Ngram,
            beam_width: 3,
            min_tokens: 10,
            max_tokens: 150,
            max_context: 700,
            call_filter: false,
            per_rater: false,
            record_latency: false,
        }
    }
}

/// Every recognised key with its documentation, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("corpus_dir", "directory the manifest's notebook paths are relative to"),
    ("manifest", "project manifest, one JSON record per line"),
    ("output_dir", "where every stage writes its outputs"),
    ("source_roots", "comma-separated package source directories crawled for docstrings"),
    ("mapping", "existing docstring mapping to inject from instead of crawling"),
    ("tokenizer_dir", "existing vocab/merges directory used instead of training one"),
    ("model", "n-gram model file used instead of the trained one"),
    ("annotations", "curation annotations, one record per case and annotator"),
    ("ratings", "human ratings, one record per case and rater"),
    ("benchmark", "benchmark file predicted and scored instead of the mined one"),
    ("predictions", "predictions file scored instead of the predicted one"),
    ("report_dir", "directory for the score report"),
    ("extern_command", "command line of an external backend process"),
    ("seed", "master seed; every stage derives its own"),
    ("split_ratio", "share of projects assigned to training, in (0, 1)"),
    ("inject_rate", "probability of injecting a comment at a mapped call, in [0, 1]"),
    ("strip_existing_comments", "remove original comments before injecting"),
    ("top_k", "number of third-party modules whose docstrings are mapped"),
    ("vocab_size", "size of a trained tokenizer vocabulary"),
    ("ngram_order", "order of the n-gram backend"),
    ("max_intent_tokens", "longest intent comment mined, in whitespace tokens"),
    ("sample_n", "candidates sampled for curation, 0 for all"),
    ("backend", "ngram or extern"),
    ("beam_width", "decoder beam width"),
    ("min_tokens", "tokens generated before the stop token is allowed"),
    ("max_tokens", "longest prediction, in tokens"),
    ("max_context", "prompt length limit, in tokens"),
    ("call_filter", "add call-filtered metric columns"),
    ("per_rater", "correlate against individual ratings instead of per-case means"),
    ("record_latency", "store decoding time in predictions (output then varies between runs)"),
];

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    /// Effective value of every key as config text.
    pub fn values(&self) -> BTreeMap<&'static str, String> {
        let roots: Vec<String> = self.source_roots.iter().map(|p| p.display().to_string()).collect();
        BTreeMap::from([
            ("corpus_dir", self.corpus_dir.display().to_string()),
            ("manifest", self.manifest.display().to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("source_roots", roots.join(",")),
            ("mapping", opt_path(&self.mapping)),
            ("tokenizer_dir", opt_path(&self.tokenizer_dir)),
            ("model", opt_path(&self.model)),
            ("annotations", opt_path(&self.annotations)),
            ("ratings", opt_path(&self.ratings)),
            ("benchmark", opt_path(&self.benchmark)),
            ("predictions", opt_path(&self.predictions)),
            ("report_dir", opt_path(&self.report_dir)),
            ("extern_command", self.extern_command.clone().unwrap_or_default()),
            ("seed", self.seed.to_string()),
            ("split_ratio", self.split_ratio.to_string()),
            ("inject_rate", self.inject_rate.to_string()),
            ("strip_existing_comments", self.strip_existing_comments.to_string()),
            ("top_k", self.top_k.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("ngram_order", self.ngram_order.to_string()),
            ("max_intent_tokens", self.max_intent_tokens.to_string()),
            ("sample_n", self.sample_n.to_string()),
            ("backend", self.backend.to_string()),
            ("beam_width", self.beam_width.to_string()),
            ("min_tokens", self.min_tokens.to_string()),
            ("max_tokens", self.max_tokens.to_string()),
            ("max_context", self.max_context.to_string()),
            ("call_filter", self.call_filter.to_string()),
            ("per_rater", self.per_rater.to_string()),
            ("record_latency", self.record_latency.to_string()),
        ])
    }

    /// Config text listing every key with its documentation and value.
    pub fn to_text(&self) -> String {
        let values = self.values();
        let mut out = String::new();
        for (key, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{key} = {}\n", values[key]));
        }
        out
    }

    /// Hash of the effective settings; independent of key order and
    /// comments in the source text.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.values() {
            h.update(format!("{k}={v}\n"));
        }
        format!("{:x}", h.finalize())
    }

    /// Apply one `key = value` setting, returning a description of the
    /// problem if the key is unknown or the value does not parse.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
        }
        fn flag(key: &str, v: &str) -> Result<bool, String> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(format!("{key}: expected true or false, got `{v}`")),
            }
        }
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "corpus_dir" => self.corpus_dir = PathBuf::from(value),
            "manifest" => self.manifest = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "source_roots" => {
                self.source_roots = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "mapping" => self.mapping = path(value),
            "tokenizer_dir" => self.tokenizer_dir = path(value),
            "model" => self.model = path(value),
            "annotations" => self.annotations = path(value),
            "ratings" => self.ratings = path(value),
            "benchmark" => self.benchmark = path(value),
            "predictions" => self.predictions = path(value),
            "report_dir" => self.report_dir = path(value),
            "extern_command" => self.extern_command = (!value.is_empty()).then(|| value.to_string()),
            "seed" => self.seed = num(key, value)?,
            "split_ratio" => self.split_ratio = num(key, value)?,
            "inject_rate" => self.inject_rate = num(key, value)?,
            "strip_existing_comments" => self.strip_existing_comments = flag(key, value)?,
            "top_k" => self.top_k = num(key, value)?,
            "vocab_size" => self.vocab_size = num(key, value)?,
            "ngram_order" => self.ngram_order = num(key, value)?,
            "max_intent_tokens" => self.max_intent_tokens = num(key, value)?,
            "sample_n" => self.sample_n = num(key, value)?,
            "backend" => self.backend = value.parse()?,
            "beam_width" => self.beam_width = num(key, value)?,
            "min_tokens" => self.min_tokens = num(key, value)?,
            "max_tokens" => self.max_tokens = num(key, value)?,
            "max_context" => self.max_context = num(key, value)?,
            "call_filter" => self.call_filter = flag(key, value)?,
            "per_rater" => self.per_rater = flag(key, value)?,
            "record_latency" => self.record_latency = flag(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Range checks shared by every stage.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            v.push(format!("split_ratio must be in (0, 1), got {}", self.split_ratio));
        }
        if !(0.0..=1.0).contains(&self.inject_rate) {
            v.push(format!("inject_rate must be in [0, 1], got {}", self.inject_rate));
        }
        if self.beam_width == 0 {
            v.push("beam_width must be at least 1".into());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            v.push(format!(
                "need 0 < min_tokens <= max_tokens, got {} and {}",
                self.min_tokens, self.max_tokens
            ));
        }
        if self.max_context == 0 {
            v.push("max_context must be positive".into());
        }
        if self.top_k == 0 {
            v.push("top_k must be positive".into());
        }
        let minimum = 256 + crate::script::SPECIAL_TOKENS.len();
        if self.vocab_size <= minimum {
            v.push(format!("vocab_size must exceed {minimum}, got {}", self.vocab_size));
        }
        if self.ngram_order == 0 {
            v.push("ngram_order must be at least 1".into());
        }
        if self.max_intent_tokens == 0 {
            v.push("max_intent_tokens must be positive".into());
        }
        if self.backend == BackendKind::Extern && self.extern_command.is_none() {
            v.push("backend = extern needs extern_command".into());
        }
        v
    }
}

/// Settings from config text, with every syntax, key or value problem
/// found. Ranges are not checked here.
pub(crate) fn parse_config(raw: &str) -> (PipelineConfig, Vec<String>) {
    let mut cfg = PipelineConfig::default();
    let mut problems = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected `key = value`", i + 1));
            continue;
        };
        let key = key.trim();
        if let Some(first) = seen.insert(key.to_string(), i + 1) {
            problems.push(format!("line {}: duplicate key `{key}` (first set on line {first})", i + 1));
            continue;
        }
        if let Err(e) = cfg.set(key, value.trim()) {
            problems.push(format!("line {}: {e}", i + 1));
        }
    }
    (cfg, problems)
}

/// Apply `overrides` (which may repeat keys from the file), then range-check.
pub(crate) fn finish(
    mut cfg: PipelineConfig,
    mut problems: Vec<String>,
    overrides: &[(String, String)],
) -> Result<PipelineConfig, PipelineError> {
    for (key, value) in overrides {
        if let Err(e) = cfg.set(key.trim(), value.trim()) {
            problems.push(format!("override: {e}"));
        }
    }
    problems.extend(cfg.violations());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(PipelineError::ConfigInvalid(problems))
    }
}

/// Parse config text, apply overrides and range-check the result. Every
/// problem is reported, not just the first.
pub fn validate_config(raw: &str, overrides: &[(String, String)]) -> Result<PipelineConfig, PipelineError> {
    let (cfg, problems) = parse_config(raw);
    finish(cfg, problems, overrides)
}
