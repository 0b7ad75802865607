//! Normalized script form of a notebook.
//!
//! A [`ScriptDoc`] is an ordered list of tagged lines. It has three textual
//! renderings:
//!
//! * **annotated**: code and comments, `<|cell|>` lines at cell ends and
//!   `<|endofcomment|>` appended to the last comment line before code. This is
//!   the on-disk form of normalized scripts.
//! * **training**: the annotated form with leading indentation replaced by
//!   `<|4space|>` tokens.
//! * **plain**: code and comments only, cell boundaries dropped.
//!
//! [`ScriptDoc::parse_view`] produces a Python-parsable text that is line
//! aligned with [`ScriptDoc::lines`], which is what the AST based stages use.

use serde::{Deserialize, Serialize};

pub const CELL: &str = "<|cell|>";
pub const END_OF_COMMENT: &str = "<|endofcomment|>";
pub const END_OF_TEXT: &str = "<|endoftext|>";
pub const INDENT: &str = "<|4space|>";

/// All structural tokens, in the order they are reserved in a trained vocabulary.
pub const SPECIAL_TOKENS: [&str; 4] = [END_OF_TEXT, CELL, END_OF_COMMENT, INDENT];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptLine {
    Code {
        text: String,
        /// `%` / `!` shell or magic line. Kept as code, skipped by call resolution.
        #[serde(default)]
        magic: bool,
    },
    /// A comment-only line. `text` is the full line, indentation and `#` included.
    Comment {
        text: String,
        #[serde(default)]
        end_of_comment: bool,
    },
    CellBoundary,
}

impl ScriptLine {
    pub fn code(text: impl Into<String>) -> Self {
        let text = text.into();
        let magic = is_magic(&text);
        ScriptLine::Code { text, magic }
    }

    pub fn comment(text: impl Into<String>) -> Self {
        ScriptLine::Comment {
            text: text.into(),
            end_of_comment: false,
        }
    }

    /// Classify one raw source line as code or comment.
    pub fn from_source_line(line: &str) -> Self {
        if line.trim_start().starts_with('#') {
            ScriptLine::comment(line)
        } else {
            ScriptLine::code(line)
        }
    }

    pub fn is_code(&self) -> bool {
        matches!(self, ScriptLine::Code { .. })
    }

    pub fn is_comment(&self) -> bool {
        matches!(self, ScriptLine::Comment { .. })
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, ScriptLine::CellBoundary)
    }

    /// Code line with something other than whitespace on it.
    pub fn is_nonblank_code(&self) -> bool {
        matches!(self, ScriptLine::Code { text, .. } if !text.trim().is_empty())
    }

    pub fn text(&self) -> &str {
        match self {
            ScriptLine::Code { text, .. } | ScriptLine::Comment { text, .. } => text,
            ScriptLine::CellBoundary => CELL,
        }
    }
}

pub fn is_magic(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with('%') || t.starts_with('!')
}

/// Text of a comment line with indentation, leading `#` characters and
/// surrounding whitespace removed.
pub fn comment_body(line: &str) -> &str {
    line.trim_start().trim_start_matches('#').trim()
}

/// Leading whitespace of a line.
pub fn indentation(line: &str) -> &str {
    let n = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[..n]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
    #[default]
    Unassigned,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Unassigned => "unassigned",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptDoc {
    pub lines: Vec<ScriptLine>,
    #[serde(default)]
    pub split: Split,
    /// Name of the owning project.
    #[serde(default)]
    pub project: String,
    /// Path of the notebook or script this document came from.
    #[serde(default)]
    pub source: String,
}

impl ScriptDoc {
    pub fn new(lines: Vec<ScriptLine>) -> Self {
        ScriptDoc {
            lines,
            ..Default::default()
        }
    }

    /// Build from plain Python source. Every line becomes a code or comment
    /// line; there are no cell boundaries.
    pub fn from_source(src: &str) -> Self {
        let mut doc = ScriptDoc::new(split_lines(src).map(ScriptLine::from_source_line).collect());
        doc.mark_end_of_comments();
        doc
    }

    /// Parse the annotated (or training) rendering back into lines.
    pub fn from_annotated(text: &str) -> Self {
        let mut lines = Vec::new();
        for raw in split_lines(text) {
            let line = decode_indentation(raw);
            if line == CELL {
                lines.push(ScriptLine::CellBoundary);
            } else if let Some(stripped) = line
                .strip_suffix(END_OF_COMMENT)
                .map(|s| s.strip_suffix(' ').unwrap_or(s))
            {
                lines.push(ScriptLine::Comment {
                    text: stripped.to_string(),
                    end_of_comment: true,
                });
            } else {
                lines.push(ScriptLine::from_source_line(&line));
            }
        }
        ScriptDoc::new(lines)
    }

    /// Recompute end-of-comment markers: the last line of every comment run
    /// whose next non-blank line is code carries the marker; nothing else does.
    pub fn mark_end_of_comments(&mut self) {
        let n = self.lines.len();
        for i in 0..n {
            let last_of_run = self.lines[i].is_comment()
                && !self.lines.get(i + 1).is_some_and(ScriptLine::is_comment);
            let followed_by_code = last_of_run
                && self.lines[i + 1..]
                    .iter()
                    .find(|l| !matches!(l, ScriptLine::Code { text, .. } if text.trim().is_empty()))
                    .is_some_and(ScriptLine::is_code);
            if let ScriptLine::Comment { end_of_comment, .. } = &mut self.lines[i] {
                *end_of_comment = followed_by_code;
            }
        }
    }

    pub fn render_annotated(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            match line {
                ScriptLine::Code { text, .. } => out.push_str(text),
                ScriptLine::Comment {
                    text,
                    end_of_comment,
                } => {
                    out.push_str(text);
                    if *end_of_comment {
                        out.push(' ');
                        out.push_str(END_OF_COMMENT);
                    }
                }
                ScriptLine::CellBoundary => out.push_str(CELL),
            }
            out.push('\n');
        }
        out
    }

    /// Annotated rendering with leading indentation encoded as indentation tokens.
    pub fn render_training(&self) -> String {
        let mut out = String::new();
        for line in self.render_annotated().lines() {
            out.push_str(&encode_indentation(line));
            out.push('\n');
        }
        out
    }

    /// Code and comments only.
    pub fn render_plain(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            if !line.is_boundary() {
                out.push_str(line.text());
                out.push('\n');
            }
        }
        out
    }

    /// Python-parsable text, line `i` of which corresponds to `self.lines[i]`.
    /// Magic lines become `pass` at the same indentation; boundaries become
    /// blank lines.
    pub fn parse_view(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            match line {
                ScriptLine::Code { text, magic: true } => {
                    out.push_str(indentation(text));
                    out.push_str("pass");
                }
                ScriptLine::Code { text, .. } | ScriptLine::Comment { text, .. } => {
                    out.push_str(text)
                }
                ScriptLine::CellBoundary => {}
            }
            out.push('\n');
        }
        out
    }

    /// Drop every comment line.
    pub fn strip_comments(&mut self) {
        self.lines.retain(|l| !l.is_comment());
    }

    pub fn code_lines(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| match l {
            ScriptLine::Code { text, .. } => Some(text.as_str()),
            _ => None,
        })
    }
}

/// Split on `\n`, dropping a trailing `\r` per line and the empty piece after a
/// final newline.
pub fn split_lines(text: &str) -> impl Iterator<Item = &str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = text.is_empty();
    body.split('\n')
        .filter(move |_| !empty)
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
}

/// Expand tabs in leading whitespace to four spaces.
pub fn normalize_tabs(line: &str) -> String {
    let indent = indentation(line);
    if !indent.contains('\t') {
        return line.to_string();
    }
    let mut out = indent.replace('\t', "    ");
    out.push_str(&line[indent.len()..]);
    out
}

/// Replace each run of four leading spaces by one indentation token. One to
/// three residual spaces stay literal, after the tokens.
pub fn encode_indentation(line: &str) -> String {
    let spaces = line.len() - line.trim_start_matches(' ').len();
    if spaces < 4 {
        return line.to_string();
    }
    let mut out = INDENT.repeat(spaces / 4);
    out.push_str(&line[spaces - spaces % 4..]);
    out
}

/// Inverse of [`encode_indentation`].
pub fn decode_indentation(line: &str) -> String {
    let mut rest = line;
    let mut n = 0;
    while let Some(r) = rest.strip_prefix(INDENT) {
        rest = r;
        n += 1;
    }
    if n == 0 {
        return line.to_string();
    }
    let mut out = " ".repeat(4 * n);
    out.push_str(rest);
    out
}

/// Replace every indentation token in free text by four spaces, wherever it
/// occurs.
pub fn decode_indentation_tokens(text: &str) -> String {
    text.replace(INDENT, "    ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn marker_on_last_comment_of_run_only() {
        let doc = ScriptDoc::from_source("# a\n# b\nx = 1\n# trailing\n");
        let flags: Vec<bool> = doc
            .lines
            .iter()
            .filter_map(|l| match l {
                ScriptLine::Comment { end_of_comment, .. } => Some(*end_of_comment),
                _ => None,
            })
            .collect();
        assert_eq!(flags, vec![false, true, false]);
    }

    #[test]
    fn comment_before_cell_boundary_has_no_marker() {
        let mut doc = ScriptDoc::new(vec![
            ScriptLine::code("x = 1"),
            ScriptLine::comment("# done"),
            ScriptLine::CellBoundary,
            ScriptLine::code("y = 2"),
        ]);
        doc.mark_end_of_comments();
        assert_eq!(
            doc.lines[1],
            ScriptLine::Comment {
                text: "# done".into(),
                end_of_comment: false
            }
        );
    }

    #[test]
    fn annotated_round_trip() {
        let mut doc = ScriptDoc::new(vec![
            ScriptLine::comment("# use RFECV to select features"),
            ScriptLine::code("rfe = RFECV(random_forest, n_jobs=-1, step=1)"),
            ScriptLine::code("if x:"),
            ScriptLine::code("      y = 2"),
            ScriptLine::code("%matplotlib inline"),
            ScriptLine::CellBoundary,
        ]);
        doc.mark_end_of_comments();
        let text = doc.render_annotated();
        assert!(text.starts_with("# use RFECV to select features <|endofcomment|>\n"));
        assert_eq!(ScriptDoc::from_annotated(&text).lines, doc.lines);
        assert_eq!(ScriptDoc::from_annotated(&doc.render_training()).lines, doc.lines);
    }

    #[test]
    fn indentation_tokens() {
        assert_eq!(encode_indentation("        x"), "<|4space|><|4space|>x");
        assert_eq!(encode_indentation("      x"), "<|4space|>  x");
        assert_eq!(encode_indentation("   x"), "   x");
        assert_eq!(normalize_tabs("\t\tx\ty"), "        x\ty");
    }

    #[test]
    fn parse_view_is_line_aligned() {
        let doc = ScriptDoc::new(vec![
            ScriptLine::code("!pip install x"),
            ScriptLine::CellBoundary,
            ScriptLine::code("  %time f()"),
        ]);
        assert_eq!(doc.parse_view(), "pass\n\n  pass\n");
    }

    proptest! {
        #[test]
        fn indentation_encoding_inverts(indent in 0usize..20, body in "[a-z(=) ]{0,12}") {
            let line = format!("{}{}", " ".repeat(indent), body);
            prop_assert_eq!(decode_indentation(&encode_indentation(&line)), line);
        }
    }
}
