//! Stage orchestration: configuration, per-stage seeding, atomic outputs
//! and the run log.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{validate_config, BackendKind, PipelineConfig, KEYS};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_LOG: &str = "run_log.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    ConfigInvalid(Vec<String>),
    #[error("{stage}: missing input {}", .path.display())]
    MissingInput { stage: String, path: PathBuf },
    #[error("{stage}: bad input {}: {message}", .path.display())]
    BadInput {
        stage: String,
        path: PathBuf,
        message: String,
    },
    #[error("{stage} failed: {message}")]
    StageFailure { stage: String, message: String },
}

impl PipelineError {
    /// Process exit status: 2 for configuration, 3 for input and 4 for
    /// stage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) => 2,
            PipelineError::MissingInput { .. } | PipelineError::BadInput { .. } => 3,
            PipelineError::StageFailure { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Split,
    Modfreq,
    Docmap,
    Inject,
    Concat,
    BpeTrain,
    TrainLm,
    BenchMine,
    BenchFilter,
    BenchAccept,
    BenchPost,
    BenchStats,
    BenchModules,
    Predict,
    Score,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 17] = [
        Stage::Ingest,
        Stage::Split,
        Stage::Modfreq,
        Stage::Docmap,
        Stage::Inject,
        Stage::Concat,
        Stage::BpeTrain,
        Stage::TrainLm,
        Stage::BenchMine,
        Stage::BenchFilter,
        Stage::BenchAccept,
        Stage::BenchPost,
        Stage::BenchStats,
        Stage::BenchModules,
        Stage::Predict,
        Stage::Score,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Modfreq => "modfreq",
            Stage::Docmap => "docmap",
            Stage::Inject => "inject",
            Stage::Concat => "concat",
            Stage::BpeTrain => "bpe-train",
            Stage::TrainLm => "train-lm",
            Stage::BenchMine => "bench-mine",
            Stage::BenchFilter => "bench-filter",
            Stage::BenchAccept => "bench-accept",
            Stage::BenchPost => "bench-post",
            Stage::BenchStats => "bench-stats",
            Stage::BenchModules => "bench-modules",
            Stage::Predict => "predict",
            Stage::Score => "score",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Seed of one stage: the first eight bytes of SHA-256 over the master
/// seed (little-endian) and the stage name.
pub fn sub_seed(seed: u64, stage: Stage) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.name().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Record of one stage execution, appended to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub sub_seed: u64,
    /// Path to SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// Path to SHA-256 of every file written.
    pub outputs: BTreeMap<String, String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub tool_version: String,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Declared output locations, relative to the output directory unless a
/// config key points elsewhere.
impl PipelineConfig {
    fn out(&self, rel: &str) -> PathBuf {
        self.output_dir.join(rel)
    }
    pub fn scripts_path(&self) -> PathBuf {
        self.out("scripts.jsonl")
    }
    pub fn split_path(&self) -> PathBuf {
        self.out("split.jsonl")
    }
    pub fn modfreq_path(&self) -> PathBuf {
        self.out("modfreq.tsv")
    }
    pub fn crawled_mapping_path(&self) -> PathBuf {
        self.out("mapping.jsonl")
    }
    pub fn mapping_path(&self) -> PathBuf {
        self.mapping.clone().unwrap_or_else(|| self.crawled_mapping_path())
    }
    pub fn injected_path(&self) -> PathBuf {
        self.out("injected.jsonl")
    }
    pub fn train_text_path(&self) -> PathBuf {
        self.out("train.txt")
    }
    pub fn trained_tokenizer_dir(&self) -> PathBuf {
        self.out("tokenizer")
    }
    pub fn tokenizer_path(&self) -> PathBuf {
        self.tokenizer_dir.clone().unwrap_or_else(|| self.trained_tokenizer_dir())
    }
    pub fn trained_model_path(&self) -> PathBuf {
        self.out("model.json")
    }
    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.trained_model_path())
    }
    pub fn candidates_path(&self) -> PathBuf {
        self.out("bench/candidates.jsonl")
    }
    pub fn filtered_path(&self) -> PathBuf {
        self.out("bench/filtered.jsonl")
    }
    pub fn acceptance_path(&self) -> PathBuf {
        self.out("bench/acceptance.jsonl")
    }
    pub fn mined_benchmark_path(&self) -> PathBuf {
        self.out("bench/benchmark.jsonl")
    }
    pub fn benchmark_path(&self) -> PathBuf {
        self.benchmark.clone().unwrap_or_else(|| self.mined_benchmark_path())
    }
    pub fn predictions_path(&self) -> PathBuf {
        self.predictions.clone().unwrap_or_else(|| self.out("predictions.jsonl"))
    }
    pub fn report_path(&self) -> PathBuf {
        self.report_dir.clone().unwrap_or_else(|| self.out("report"))
    }

    /// Resolve relative paths against `base` (the config file's directory).
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        self.source_roots.iter_mut().for_each(fix);
        for p in [
            &mut self.mapping,
            &mut self.tokenizer_dir,
            &mut self.model,
            &mut self.annotations,
            &mut self.ratings,
            &mut self.benchmark,
            &mut self.predictions,
            &mut self.report_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

/// Read a config file (relative paths resolve against its directory),
/// apply command-line overrides (relative to the working directory) and
/// range-check the result. Without a file the defaults are used.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig, PipelineError> {
    let Some(path) = path else {
        return validate_config("", overrides);
    };
    let raw = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::ConfigInvalid(vec![format!("{}: {e}", path.display())]))?;
    let (mut cfg, problems) = config::parse_config(&raw);
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    config::finish(cfg, problems, overrides)
}

/// Reads and writes of one stage. Outputs are held in memory and written
/// only after the stage has finished, each through a temporary file and a
/// rename, so a failed or interrupted stage never leaves a partial file at
/// a declared path.
pub(crate) struct StageIo<'a> {
    pub stage: Stage,
    pub cfg: &'a PipelineConfig,
    pub seed: u64,
    inputs: BTreeMap<PathBuf, String>,
    outputs: Vec<(PathBuf, Vec<u8>)>,
}

impl<'a> StageIo<'a> {
    fn new(stage: Stage, cfg: &'a PipelineConfig) -> Self {
        StageIo {
            stage,
            cfg,
            seed: sub_seed(cfg.seed, stage),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn missing(&self, path: &Path) -> PipelineError {
        PipelineError::MissingInput {
            stage: self.stage.name().into(),
            path: path.to_path_buf(),
        }
    }

    pub fn bad(&self, path: &Path, message: impl std::fmt::Display) -> PipelineError {
        PipelineError::BadInput {
            stage: self.stage.name().into(),
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn fail(&self, message: impl std::fmt::Display) -> PipelineError {
        PipelineError::StageFailure {
            stage: self.stage.name().into(),
            message: message.to_string(),
        }
    }

    pub fn read_bytes(&mut self, path: &Path) -> Result<Vec<u8>, PipelineError> {
        match std::fs::read(path) {
            Ok(b) => {
                self.inputs.insert(path.to_path_buf(), digest(&b));
                Ok(b)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(self.missing(path)),
            Err(e) => Err(self.bad(path, e)),
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<String, PipelineError> {
        let bytes = self.read_bytes(path)?;
        String::from_utf8(bytes).map_err(|e| self.bad(path, e))
    }

    /// Note a file read by library code (e.g. a tokenizer directory).
    pub fn record_input(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.read_bytes(path).map(|_| ())
    }

    pub fn write(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((path, bytes.into()));
    }

    fn commit(self, started: u128) -> Result<RunManifest, PipelineError> {
        let label = |p: &Path| {
            p.strip_prefix(&self.cfg.output_dir)
                .map(|r| r.display().to_string())
                .unwrap_or_else(|_| p.display().to_string())
        };
        let mut outputs = BTreeMap::new();
        for (path, bytes) in &self.outputs {
            crate::fsutil::write_atomic(path, bytes)
                .map_err(|e| self.fail(format!("cannot write {}: {e}", path.display())))?;
            outputs.insert(label(path), digest(bytes));
        }
        let manifest = RunManifest {
            stage: self.stage.name().into(),
            config_hash: self.cfg.hash(),
            sub_seed: self.seed,
            inputs: self.inputs.iter().map(|(p, d)| (label(p), d.clone())).collect(),
            outputs,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            tool_version: TOOL_VERSION.into(),
        };
        append_run_log(&self.cfg.output_dir, &manifest).map_err(|e| self.fail(format!("cannot append run log: {e}")))?;
        Ok(manifest)
    }
}

fn append_run_log(dir: &Path, m: &RunManifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut line = serde_json::to_string(m).expect("manifest serializes");
    line.push('\n');
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(dir.join(RUN_LOG))?;
    f.write_all(line.as_bytes())
}

/// Run one stage and append its manifest to the run log.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let started = now_ms();
    let mut io = StageIo::new(stage, cfg);
    log::info!("stage {stage}: starting");
    stages::run(&mut io)?;
    let m = io.commit(started)?;
    log::info!("stage {stage}: wrote {} file(s)", m.outputs.len());
    Ok(m)
}

/// Stages `run-all` executes for `cfg`: crawling, tokenizer and model
/// training are skipped when the config supplies their products.
pub fn planned_stages(cfg: &PipelineConfig) -> Vec<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| match s {
            Stage::Docmap => cfg.mapping.is_none(),
            Stage::BpeTrain => cfg.tokenizer_dir.is_none(),
            Stage::TrainLm => cfg.model.is_none() && cfg.backend == BackendKind::Ngram,
            _ => true,
        })
        .collect()
}

pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<RunManifest>, PipelineError> {
    planned_stages(cfg).into_iter().map(|s| run_stage(s, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ_per_stage() {
        let a = sub_seed(7, Stage::Split);
        assert_eq!(a, sub_seed(7, Stage::Split));
        assert_ne!(a, sub_seed(7, Stage::BenchMine));
        assert_ne!(a, sub_seed(8, Stage::Split));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::ConfigInvalid(vec![]).exit_code(), 2);
        let missing = PipelineError::MissingInput {
            stage: "inject".into(),
            path: "m.jsonl".into(),
        };
        assert_eq!(missing.exit_code(), 3);
        assert!(missing.to_string().contains("m.jsonl"));
    }

    #[test]
    fn missing_mapping_is_reported_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            output_dir: dir.path().to_path_buf(),
            mapping: Some(dir.path().join("nowhere.jsonl")),
            ..Default::default()
        };
        std::fs::write(cfg.split_path(), "").unwrap();
        match run_stage(Stage::Inject, &cfg) {
            Err(PipelineError::MissingInput { path, .. }) => assert_eq!(path, dir.path().join("nowhere.jsonl")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!cfg.injected_path().exists());
    }
}
