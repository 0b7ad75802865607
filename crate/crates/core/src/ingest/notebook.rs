//! Notebook (format v4) parsing and conversion to [`ScriptDoc`].

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use super::clean::clean_script;
use super::lang::LanguageClassifier;
use super::IngestError;
use crate::script::{ScriptDoc, ScriptLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Code,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub kind: CellKind,
    pub source_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotebookDoc {
    pub cells: Vec<Cell>,
    pub source_path: String,
    pub project: String,
}

impl NotebookDoc {
    /// Parse notebook JSON. Raw cells are skipped. A notebook that declares a
    /// kernel language other than Python is rejected; one that declares
    /// nothing is assumed to be Python.
    pub fn parse(json: &str, source_path: &str, project: &str) -> Result<Self, IngestError> {
        let malformed = |reason: &str| IngestError::MalformedNotebook {
            path: source_path.to_string(),
            reason: reason.to_string(),
        };
        let root: Value = serde_json::from_str(json).map_err(|e| malformed(&e.to_string()))?;
        match root.get("nbformat").and_then(Value::as_u64) {
            Some(4) => {}
            Some(v) => return Err(malformed(&format!("unsupported nbformat {v}"))),
            None => return Err(malformed("missing `nbformat`")),
        }
        if let Some(lang) = kernel_language(&root) {
            if !lang.to_ascii_lowercase().contains("python") {
                return Err(IngestError::NonPythonNotebook {
                    path: source_path.to_string(),
                    language: lang,
                });
            }
        }
        let raw_cells = root
            .get("cells")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing `cells`"))?;
        let mut cells = Vec::with_capacity(raw_cells.len());
        for cell in raw_cells {
            let kind = match cell.get("cell_type").and_then(Value::as_str) {
                Some("code") => CellKind::Code,
                Some("markdown") => CellKind::Markdown,
                Some(_) => continue,
                None => return Err(malformed("cell without `cell_type`")),
            };
            let source = match cell.get("source") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Array(parts)) => parts
                    .iter()
                    .map(|p| p.as_str().ok_or_else(|| malformed("non-string source entry")))
                    .collect::<Result<String, _>>()?,
                _ => return Err(malformed("cell without `source`")),
            };
            cells.push(Cell {
                kind,
                source_lines: crate::script::split_lines(&source).map(String::from).collect(),
            });
        }
        Ok(NotebookDoc {
            cells,
            source_path: source_path.to_string(),
            project: project.to_string(),
        })
    }
}

fn kernel_language(root: &Value) -> Option<String> {
    let meta = root.get("metadata")?;
    let from = |path: &[&str]| {
        let mut v = meta;
        for key in path {
            v = v.get(key)?;
        }
        v.as_str().map(String::from)
    };
    from(&["kernelspec", "language"])
        .or_else(|| from(&["language_info", "name"]))
        .or_else(|| from(&["kernelspec", "name"]))
}

/// Strip markdown header symbols from a markdown line turned comment body.
fn markdown_comment(line: &str) -> ScriptLine {
    let body = line.trim_start_matches(|c: char| c == '#' || c.is_whitespace()).trim_end();
    ScriptLine::comment(format!("# {body}").trim_end().to_string())
}

/// Convert a notebook to its cleaned script form. Markdown before the first
/// code cell is dropped, markdown cells become comments, every code cell ends
/// with a cell boundary.
pub fn notebook_to_script(nb: &NotebookDoc, classifier: &dyn LanguageClassifier) -> ScriptDoc {
    let mut lines = Vec::new();
    let first_code = nb.cells.iter().position(|c| c.kind == CellKind::Code);
    if let Some(first) = first_code {
        for cell in &nb.cells[first..] {
            match cell.kind {
                CellKind::Markdown => {
                    lines.extend(cell.source_lines.iter().map(|l| markdown_comment(l)))
                }
                CellKind::Code => {
                    lines.extend(cell.source_lines.iter().map(|l| ScriptLine::from_source_line(l)));
                    lines.push(ScriptLine::CellBoundary);
                }
            }
        }
    }
    let doc = ScriptDoc {
        lines,
        project: nb.project.clone(),
        source: nb.source_path.clone(),
        ..Default::default()
    };
    clean_script(&doc, classifier)
}

fn cell_delimiter() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^#\s*In\s*\[\s*[0-9 ]*\]\s*:?\s*$").unwrap())
}

/// Whether a line is one of the `# In[ ]:` / `# In[12]:` delimiters an
/// exported notebook uses between code cells.
pub fn is_cell_delimiter(line: &str) -> bool {
    cell_delimiter().is_match(line.trim())
}

/// Convert a `.py` export of a notebook (cells delimited by `# In[n]:`
/// comments) to its cleaned script form. Everything before the first
/// delimiter is dropped. Comment lines between the last code line of a cell
/// and the next delimiter are markdown and move to the next cell.
pub fn exported_script_to_script(
    text: &str,
    source_path: &str,
    project: &str,
    classifier: &dyn LanguageClassifier,
) -> ScriptDoc {
    let mut lines: Vec<ScriptLine> = Vec::new();
    let mut seen_delimiter = false;
    // Lines after the last code line of the current cell.
    let mut pending: Vec<&str> = Vec::new();
    let mut cell_has_code = false;
    for line in crate::script::split_lines(text) {
        if is_cell_delimiter(line) {
            if seen_delimiter {
                close_cell(&mut lines);
            }
            lines.extend(pending.drain(..).filter(|l| !l.trim().is_empty()).map(markdown_comment));
            seen_delimiter = true;
            cell_has_code = false;
            continue;
        }
        if !seen_delimiter {
            continue;
        }
        let is_code = !line.trim().is_empty() && !line.trim_start().starts_with('#');
        if is_code {
            let leading = !cell_has_code;
            lines.extend(
                pending
                    .drain(..)
                    .filter(|l| !(leading && l.trim().is_empty()))
                    .map(ScriptLine::from_source_line),
            );
            cell_has_code = true;
            lines.push(ScriptLine::from_source_line(line));
        } else {
            pending.push(line);
        }
    }
    if seen_delimiter {
        lines.extend(pending.drain(..).map(ScriptLine::from_source_line));
        close_cell(&mut lines);
    }
    let doc = ScriptDoc {
        lines,
        project: project.to_string(),
        source: source_path.to_string(),
        ..Default::default()
    };
    clean_script(&doc, classifier)
}

fn close_cell(lines: &mut Vec<ScriptLine>) {
    lines.push(ScriptLine::CellBoundary);
}
