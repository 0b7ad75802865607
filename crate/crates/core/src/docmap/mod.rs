//! Mapping from fully qualified callable paths to docstring titles, and
//! root-module usage statistics.

mod crawl;
pub mod docstring;
mod modfreq;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crawl::{crawl_docstrings, CrawlReport, VisitedEntity};
pub use docstring::{docstring_title, MAX_TITLE_CHARS};
pub use modfreq::{count_root_modules, stdlib_modules, ModuleFrequency};

#[derive(Debug, Error)]
pub enum DocmapError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid FQPN {0:?}")]
    InvalidFqpn(String),
    #[error("invalid title for {fqpn}: {reason}")]
    InvalidTitle { fqpn: String, reason: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// True when `s` is a dotted module path followed by a callable segment
/// (`pkg.mod.func()`, `pkg.Class()`) and optionally one method segment
/// (`pkg.Class().method()`).
pub fn is_valid_fqpn(s: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let ident = r"[\p{L}_][\p{L}\p{N}_]*";
        Regex::new(&format!(r"^{ident}(\.{ident})*\(\)(\.{ident}\(\))?$")).unwrap()
    })
    .is_match(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    pub title: String,
    pub source_path: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityDocMapping {
    pub entries: BTreeMap<String, DocEntry>,
    /// Public callables seen by the crawl.
    pub visited: usize,
    /// Of those, how many had a docstring.
    pub documented: usize,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord<'a> {
    fqpn: std::borrow::Cow<'a, str>,
    title: std::borrow::Cow<'a, str>,
    source_path: std::borrow::Cow<'a, str>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    visited: usize,
    documented: usize,
    coverage: f64,
}

#[derive(Serialize, Deserialize)]
struct SummaryRecord {
    summary: Summary,
}

impl EntityDocMapping {
    /// Mapping built directly from `(fqpn, title)` pairs; every pair counts
    /// as a visited, documented entity.
    pub fn from_titles<I, K, V>(pairs: I) -> Result<Self, DocmapError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut m = EntityDocMapping::default();
        for (k, v) in pairs {
            m.insert(k.into(), v.into(), String::new())?;
        }
        m.visited = m.entries.len();
        m.documented = m.entries.len();
        Ok(m)
    }

    fn insert(&mut self, fqpn: String, title: String, source_path: String) -> Result<(), DocmapError> {
        if !is_valid_fqpn(&fqpn) {
            return Err(DocmapError::InvalidFqpn(fqpn));
        }
        let reason = if title.trim().is_empty() {
            Some("empty")
        } else if title.contains('\n') {
            Some("spans several lines")
        } else if title.chars().count() > MAX_TITLE_CHARS {
            Some("too long")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(DocmapError::InvalidTitle { fqpn, reason });
        }
        self.entries.insert(fqpn, DocEntry { title, source_path });
        Ok(())
    }

    pub fn title(&self, fqpn: &str) -> Option<&str> {
        self.entries.get(fqpn).map(|e| e.title.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fraction of visited entities that had a docstring (0 when nothing
    /// was visited).
    pub fn coverage(&self) -> f64 {
        if self.visited == 0 {
            0.0
        } else {
            self.documented as f64 / self.visited as f64
        }
    }

    /// One JSON record per entry in FQPN order, then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (fqpn, e) in &self.entries {
            let rec = EntryRecord {
                fqpn: fqpn.into(),
                title: e.title.as_str().into(),
                source_path: e.source_path.as_str().into(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain strings serialize"));
            out.push('\n');
        }
        let summary = SummaryRecord {
            summary: Summary {
                visited: self.visited,
                documented: self.documented,
                coverage: self.coverage(),
            },
        };
        out.push_str(&serde_json::to_string(&summary).expect("numbers serialize"));
        out.push('\n');
        out
    }

    /// Read the format written by [`to_jsonl`](Self::to_jsonl). Without a
    /// summary record, every entry counts as visited and documented.
    pub fn from_jsonl(text: &str) -> Result<Self, DocmapError> {
        let mut m = EntityDocMapping::default();
        let mut summary = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let format = |e: serde_json::Error| DocmapError::Format {
                line: i + 1,
                message: e.to_string(),
            };
            let value: serde_json::Value = serde_json::from_str(line).map_err(format)?;
            if value.get("summary").is_some() {
                let s: SummaryRecord = serde_json::from_value(value).map_err(format)?;
                summary = Some(s.summary);
            } else {
                let r: EntryRecord = serde_json::from_value(value).map_err(format)?;
                m.insert(r.fqpn.into_owned(), r.title.into_owned(), r.source_path.into_owned())?;
            }
        }
        match summary {
            Some(s) => {
                m.visited = s.visited;
                m.documented = s.documented;
            }
            None => {
                m.visited = m.entries.len();
                m.documented = m.entries.len();
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, DocmapError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}
