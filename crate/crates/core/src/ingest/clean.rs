use super::lang::LanguageClassifier;
use crate::script::{comment_body, normalize_tabs, ScriptDoc, ScriptLine};

/// Longest comment run kept by [`clean_script`].
pub const MAX_COMMENT_RUN: usize = 2;

/// Apply the corpus cleaning rules:
///
/// 1. leading tabs become four spaces;
/// 2. empty and non-English comments are removed;
/// 3. comment runs are truncated to their first two lines;
/// 4. cells without any non-blank code line are removed, together with their
///    boundary; blank lines at the edges of a cell are dropped;
/// 5. end-of-comment markers are recomputed.
///
/// `clean_script(clean_script(s)) == clean_script(s)`.
pub fn clean_script(doc: &ScriptDoc, classifier: &dyn LanguageClassifier) -> ScriptDoc {
    let mut lines: Vec<ScriptLine> = Vec::with_capacity(doc.lines.len());
    let mut run = 0usize;
    for line in &doc.lines {
        match line {
            ScriptLine::Comment { text, .. } => {
                let text = normalize_tabs(text);
                let body = comment_body(&text);
                if body.is_empty() || !classifier.is_english(body) {
                    continue;
                }
                run += 1;
                if run <= MAX_COMMENT_RUN {
                    lines.push(ScriptLine::comment(text));
                }
            }
            ScriptLine::Code { text, .. } => {
                run = 0;
                lines.push(ScriptLine::code(normalize_tabs(text)));
            }
            ScriptLine::CellBoundary => {
                run = 0;
                lines.push(ScriptLine::CellBoundary);
            }
        }
    }

    let mut kept = Vec::with_capacity(lines.len());
    for cell in lines.split_inclusive(ScriptLine::is_boundary) {
        if !cell.iter().any(ScriptLine::is_nonblank_code) {
            continue;
        }
        let is_blank = |l: &ScriptLine| l.is_code() && !l.is_nonblank_code();
        let (body, boundary) = match cell.split_last() {
            Some((last, body)) if last.is_boundary() => (body, Some(last)),
            _ => (cell, None),
        };
        let start = body.iter().position(|l| !is_blank(l)).unwrap_or(body.len());
        let end = body.iter().rposition(|l| !is_blank(l)).map_or(start, |i| i + 1);
        kept.extend_from_slice(&body[start..end]);
        kept.extend(boundary.cloned());
    }

    let mut out = ScriptDoc {
        lines: kept,
        split: doc.split,
        project: doc.project.clone(),
        source: doc.source.clone(),
    };
    out.mark_end_of_comments();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::lang::WordListClassifier;
    use proptest::prelude::*;

    fn clean(doc: &ScriptDoc) -> ScriptDoc {
        clean_script(doc, WordListClassifier::bundled())
    }

    #[test]
    fn truncates_long_comment_runs() {
        let doc = ScriptDoc::from_source("# one line\n# two lines\n# three lines\n# four lines\nx = 1\n");
        let out = clean(&doc);
        assert_eq!(out.render_annotated(), "# one line\n# two lines <|endofcomment|>\nx = 1\n");
    }

    #[test]
    fn clean_is_identity_on_clean_input() {
        let doc = ScriptDoc::from_source("import os\n# list the files\nos.listdir('.')\n");
        let once = clean(&doc);
        assert_eq!(once.lines, doc.lines);
        assert_eq!(clean(&once), once);
    }

    #[test]
    fn only_empty_cells_gives_empty_script() {
        let doc = ScriptDoc::new(vec![
            ScriptLine::CellBoundary,
            ScriptLine::code(""),
            ScriptLine::CellBoundary,
            ScriptLine::comment("#"),
            ScriptLine::CellBoundary,
        ]);
        assert!(clean(&doc).lines.is_empty());
    }

    #[test]
    fn drops_empty_and_foreign_comments_and_tabs() {
        let doc = ScriptDoc::new(vec![
            ScriptLine::comment("#   "),
            ScriptLine::comment("# cargar los datos del archivo"),
            ScriptLine::code("if x:"),
            ScriptLine::code("\ty = 1"),
            ScriptLine::CellBoundary,
        ]);
        assert_eq!(clean(&doc).render_annotated(), "if x:\n    y = 1\n<|cell|>\n");
    }

    fn arb_line() -> impl Strategy<Value = ScriptLine> {
        prop_oneof![
            3 => "[ \t]{0,3}[a-z =()]{0,8}".prop_map(ScriptLine::code),
            2 => "[ \t]{0,2}#{1,3} ?(plot the data|read file|línea en español|)".prop_map(ScriptLine::comment),
            1 => Just(ScriptLine::CellBoundary),
        ]
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(lines in prop::collection::vec(arb_line(), 0..30)) {
            let once = clean(&ScriptDoc::new(lines));
            prop_assert_eq!(clean(&once), once.clone());
            // No comment run longer than two lines, no adjacent boundaries.
            let mut run = 0;
            for w in once.lines.windows(2) {
                prop_assert!(!(w[0].is_boundary() && w[1].is_boundary()));
            }
            for l in &once.lines {
                run = if l.is_comment() { run + 1 } else { 0 };
                prop_assert!(run <= MAX_COMMENT_RUN);
            }
        }
    }
}
