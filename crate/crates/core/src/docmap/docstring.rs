//! Docstring literal decoding and title extraction.

use std::sync::OnceLock;

use regex::Regex;
use tree_sitter::Node;

use crate::pyast;

/// Longest title kept, in characters.
pub const MAX_TITLE_CHARS: usize = 300;

/// Docstring of a module, class or function body: the value of a leading
/// string-literal expression statement.
pub fn body_docstring(body: Node<'_>, src: &str) -> Option<String> {
    let mut cursor = body.walk();
    let first = body.named_children(&mut cursor).find(|n| n.kind() != "comment")?;
    if first.kind() != "expression_statement" || first.named_child_count() != 1 {
        return None;
    }
    let expr = first.named_child(0)?;
    match expr.kind() {
        "string" => string_value(pyast::text(expr, src)),
        "concatenated_string" => {
            let mut c = expr.walk();
            let parts: Option<Vec<String>> = expr
                .named_children(&mut c)
                .filter(|n| n.kind() == "string")
                .map(|n| string_value(pyast::text(n, src)))
                .collect();
            parts.map(|p| p.concat())
        }
        _ => None,
    }
}

/// Value of a Python string literal. Byte and f-strings give `None` (they
/// are not docstrings).
pub fn string_value(literal: &str) -> Option<String> {
    let prefix_len = literal.find(['\'', '"'])?;
    let prefix = literal[..prefix_len].to_ascii_lowercase();
    if prefix.contains('b') || prefix.contains('f') {
        return None;
    }
    let raw = prefix.contains('r');
    let rest = &literal[prefix_len..];
    let quote = if rest.starts_with("\"\"\"") || rest.starts_with("'''") {
        &rest[..3]
    } else {
        &rest[..1]
    };
    let inner = rest.strip_prefix(quote)?.strip_suffix(quote)?;
    Some(if raw { inner.to_string() } else { unescape(inner) })
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some('\'') => out.push('\''),
            Some('"') => out.push('"'),
            Some('\n') => {}
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn terminator() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?](\s|$)").unwrap())
}

/// First sentence of a docstring.
///
/// The first paragraph (up to the first blank line) has its whitespace
/// collapsed to single spaces and is cut before the first `.`, `!` or `?`
/// that is followed by whitespace or the end. Without such a terminator the
/// first non-blank line is used. Titles are capped at [`MAX_TITLE_CHARS`].
pub fn docstring_title(doc: &str) -> Option<String> {
    let mut lines = doc.lines().map(str::trim).skip_while(|l| l.is_empty());
    let first_line = lines.clone().next()?;
    let paragraph: Vec<&str> = lines.by_ref().take_while(|l| !l.is_empty()).collect();
    let collapsed = paragraph.join(" ").split_whitespace().collect::<Vec<_>>().join(" ");
    let title = match terminator().find(&collapsed) {
        Some(m) => collapsed[..m.start()].trim().to_string(),
        None => first_line.split_whitespace().collect::<Vec<_>>().join(" "),
    };
    let title: String = title.chars().take(MAX_TITLE_CHARS).collect();
    let title = title.trim().to_string();
    (!title.is_empty()).then_some(title)
}
