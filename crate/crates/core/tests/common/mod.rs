#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlgp::pipeline::{load_config, PipelineConfig, RUN_LOG};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pipeline")
}

pub fn fixture_config() -> PathBuf {
    fixture_dir().join("pipeline.conf")
}

pub fn gpt2_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/gpt2")
}

/// The fixture configuration with its output redirected to `out`.
pub fn fixture_pipeline(out: &Path, extra: &[(&str, &str)]) -> PipelineConfig {
    let mut overrides = vec![("output_dir".to_string(), out.display().to_string())];
    overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    load_config(Some(&fixture_config()), &overrides).expect("fixture config is valid")
}

pub fn nlgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlgp"))
        .args(args)
        .env_remove("NLGP_CONFIG")
        .output()
        .expect("nlgp binary runs")
}

/// Every regular file below `root`, keyed by its relative path. The run log
/// (which holds wall-clock timestamps) is left out.
pub fn tree_contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else {
            return;
        };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                if rel != RUN_LOG {
                    out.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Files named like the temporaries used for atomic writes.
pub fn is_temporary(rel: &str) -> bool {
    rel.split('/').any(|part| part.starts_with(".nlgp-"))
}
