//! Notebook corpus ingestion: fork filtering, notebook conversion and
//! cleaning, project-grouped train/eval split and training-file assembly.

pub mod clean;
pub mod lang;
pub mod notebook;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::clean_script;
pub use lang::{LanguageClassifier, WordListClassifier};
pub use notebook::{exported_script_to_script, notebook_to_script, Cell, CellKind, NotebookDoc};

use crate::script::{ScriptDoc, Split, END_OF_TEXT};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: notebook kernel is `{language}`, not Python")]
    NonPythonNotebook { path: String, language: String },
    #[error("{path}: malformed notebook: {reason}")]
    MalformedNotebook { path: String, reason: String },
    #[error("{path}: script does not parse as Python")]
    ParseError { path: String },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One project record of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectMeta {
    #[serde(rename = "name")]
    pub project_name: String,
    #[serde(rename = "stars")]
    pub star_count: u64,
    #[serde(rename = "license", default)]
    pub license_id: String,
    #[serde(rename = "paths")]
    pub notebook_paths: Vec<String>,
}

/// Read a project manifest: one JSON record per line, blank lines and `#`
/// lines ignored.
pub fn read_manifest(text: &str) -> Result<Vec<ProjectMeta>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let meta: ProjectMeta = serde_json::from_str(line).map_err(|e| IngestError::Manifest {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if meta.project_name.is_empty() {
            return Err(IngestError::Manifest {
                line: i + 1,
                reason: "empty project name".into(),
            });
        }
        if meta.notebook_paths.is_empty() {
            return Err(IngestError::Manifest {
                line: i + 1,
                reason: format!("project `{}` lists no notebooks", meta.project_name),
            });
        }
        out.push(meta);
    }
    Ok(out)
}

/// Keep one project per name: the one with the most stars, the earliest
/// manifest entry on ties. Output keeps manifest order.
pub fn filter_forks(projects: &[ProjectMeta]) -> Vec<ProjectMeta> {
    let mut best: HashMap<&str, usize> = HashMap::new();
    for (i, p) in projects.iter().enumerate() {
        best.entry(&p.project_name)
            .and_modify(|b| {
                if p.star_count > projects[*b].star_count {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| projects[i].clone()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_projects: usize,
    pub eval_projects: usize,
    pub train_files: usize,
    pub eval_files: usize,
}

/// Assign whole projects to train or eval. Project names are sorted, shuffled
/// with a seeded generator, and the first `round(ratio * n)` go to train.
pub fn split_corpus(scripts: &mut [ScriptDoc], ratio: f64, seed: u64) -> SplitSummary {
    assert!(ratio > 0.0 && ratio < 1.0, "split ratio must be in (0, 1)");
    let names: BTreeSet<&str> = scripts.iter().map(|s| s.project.as_str()).collect();
    let mut names: Vec<String> = names.into_iter().map(String::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.shuffle(&mut rng);
    let n_train = ((ratio * names.len() as f64).round() as usize).min(names.len());
    let assignment: HashMap<&str, Split> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), if i < n_train { Split::Train } else { Split::Eval }))
        .collect();
    let mut summary = SplitSummary {
        train_projects: n_train,
        eval_projects: names.len() - n_train,
        ..Default::default()
    };
    for s in scripts.iter_mut() {
        s.split = assignment[s.project.as_str()];
        match s.split {
            Split::Train => summary.train_files += 1,
            _ => summary.eval_files += 1,
        }
    }
    summary
}

/// Join the training renderings of `scripts` with the end-of-text symbol
/// between adjacent documents (none after the last).
pub fn concatenate_training_file(scripts: &[ScriptDoc]) -> String {
    scripts
        .iter()
        .map(ScriptDoc::render_training)
        .collect::<Vec<_>>()
        .join(END_OF_TEXT)
}

/// Inverse of [`concatenate_training_file`] at the document level.
pub fn split_training_file(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    text.split(END_OF_TEXT).collect()
}

/// Outcome of converting one notebook file.
#[derive(Debug)]
pub enum IngestOutcome {
    Converted(ScriptDoc),
    Rejected { path: String, reason: String },
}

/// Convert one notebook (`.ipynb`) or exported script (`.py`) to a cleaned
/// script; reject it if it is not Python or if its code does not parse.
pub fn ingest_file(
    path: &Path,
    display_path: &str,
    project: &str,
    classifier: &dyn LanguageClassifier,
) -> IngestOutcome {
    let reject = |reason: String| IngestOutcome::Rejected {
        path: display_path.to_string(),
        reason,
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return reject(e.to_string()),
    };
    let doc = if path.extension().is_some_and(|e| e == "py") {
        exported_script_to_script(&text, display_path, project, classifier)
    } else {
        match NotebookDoc::parse(&text, display_path, project) {
            Ok(nb) => notebook_to_script(&nb, classifier),
            Err(e) => return reject(e.to_string()),
        }
    };
    if !crate::pyast::parses_cleanly(&doc.parse_view()) {
        return reject(IngestError::ParseError { path: display_path.into() }.to_string());
    }
    IngestOutcome::Converted(doc)
}

/// Notebook paths of `projects` resolved against `base`, skipping checkpoint
/// copies.
pub fn notebook_files(projects: &[ProjectMeta], base: &Path) -> Vec<(String, PathBuf, String)> {
    let mut out = Vec::new();
    for p in projects {
        for rel in &p.notebook_paths {
            if rel.contains(".ipynb_checkpoints") {
                continue;
            }
            out.push((p.project_name.clone(), base.join(rel), rel.clone()));
        }
    }
    out
}
