use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use tree_sitter::Node;

use super::{AnnotationRecord, BenchError, BenchmarkCase, CandidateCase};
use crate::docmap::ModuleFrequency;
use crate::inject::resolve_source_lenient;
use crate::pyast;
use crate::script::{comment_body, indentation};

/// Remove comments (whole-line and trailing) from code. Lines that held
/// only a comment disappear; other lines keep their code, right-trimmed.
pub fn strip_code_comments(code: &str) -> String {
    let tree = pyast::parse(code);
    let comments: Vec<std::ops::Range<usize>> = pyast::preorder(tree.root_node())
        .into_iter()
        .filter(|n| n.kind() == "comment")
        .map(|n| n.byte_range())
        .collect();
    if comments.is_empty() {
        return code.to_string();
    }
    let mut out = String::with_capacity(code.len());
    let mut offset = 0;
    for line in code.split_inclusive('\n') {
        let range = offset..offset + line.len();
        offset += line.len();
        let mut kept = String::new();
        let mut had_comment = false;
        let mut pos = range.start;
        for c in comments.iter().filter(|c| c.start >= range.start && c.start < range.end) {
            kept.push_str(&code[pos..c.start]);
            pos = c.end.min(range.end);
            had_comment = true;
        }
        kept.push_str(&code[pos..range.end]);
        if !had_comment {
            out.push_str(&kept);
            continue;
        }
        let trimmed = kept.trim_end();
        if !trimmed.trim().is_empty() {
            out.push_str(trimmed);
            out.push('\n');
        }
    }
    out
}

/// Remove the common leading whitespace of the non-blank lines.
pub fn dedent(text: &str) -> String {
    let common = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| indentation(l).len())
        .min()
        .unwrap_or(0);
    text.lines()
        .map(|l| if l.len() >= common { &l[common..] } else { l.trim_start() })
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Identifiers used as names (not attribute or keyword-argument labels),
/// outside import statements.
fn used_names(code: &str) -> HashSet<String> {
    let tree = pyast::parse(code);
    let mut out = HashSet::new();
    for n in pyast::preorder(tree.root_node()) {
        if n.kind() != "identifier" || inside_import(n) {
            continue;
        }
        if let Some(p) = n.parent() {
            let is_field = |f: &str| p.child_by_field_name(f).is_some_and(|c| c.id() == n.id());
            if (p.kind() == "attribute" && is_field("attribute")) || (p.kind() == "keyword_argument" && is_field("name")) {
                continue;
            }
        }
        out.insert(pyast::text(n, code).to_string());
    }
    out
}

fn inside_import(mut n: Node<'_>) -> bool {
    while let Some(p) = n.parent() {
        if matches!(p.kind(), "import_statement" | "import_from_statement" | "future_import_statement") {
            return true;
        }
        n = p;
    }
    false
}

/// Revised intent chosen by at least two relevant annotators; ties go to
/// the lexicographically smallest text.
fn majority_intent(annotations: &[AnnotationRecord]) -> Option<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for a in annotations.iter().filter(|a| a.relevant) {
        let text = comment_body(a.revised_intent.trim()).trim().to_string();
        if !text.is_empty() {
            *counts.entry(text).or_default() += 1;
        }
    }
    let best = counts.values().copied().max()?;
    (best >= 2).then(|| counts.into_iter().find(|(_, c)| *c == best).expect("maximum exists").0)
}

/// Turn an accepted candidate into a benchmark case: target lines above the
/// consensus span join the context, the target is the span with comments
/// removed, top-level context imports whose names only the target uses
/// move to the front of the target, and the intent is the majority revised
/// intent (or the original comment text).
pub fn postprocess(
    cand: &CandidateCase,
    span: (usize, usize),
    annotations: &[AnnotationRecord],
) -> Result<BenchmarkCase, BenchError> {
    let target_lines: Vec<&str> = cand.target.lines().collect();
    let (first, last) = span;
    if first == 0 || first > last || last > target_lines.len() {
        return Err(BenchError::SpanOutOfRange {
            case_id: cand.id.clone(),
            first,
            last,
            lines: target_lines.len(),
        });
    }
    let mut context = cand.context.clone();
    for l in &target_lines[..first - 1] {
        context.push_str(l);
        context.push('\n');
    }
    let span_text: String = target_lines[first - 1..last].iter().map(|l| format!("{l}\n")).collect();
    let mut target = strip_code_comments(&span_text);

    let target_uses = used_names(&dedent(&target));
    let context_uses = used_names(&context);
    let tree = pyast::parse(&context);
    let mut moved_rows: BTreeSet<usize> = BTreeSet::new();
    for node in pyast::preorder(tree.root_node()) {
        if node.start_position().column != 0 {
            continue;
        }
        let Some(stmt) = pyast::import_stmt(node, &context) else { continue };
        if stmt.modules.iter().any(|m| m == "__future__") {
            continue;
        }
        let locals: Vec<&str> = stmt.bindings.iter().map(|b| b.local.as_str()).collect();
        let only_target = !locals.is_empty()
            && locals.iter().any(|l| target_uses.contains(*l))
            && locals.iter().all(|l| !context_uses.contains(*l));
        if only_target {
            moved_rows.extend(stmt.start_line..=stmt.end_line);
        }
    }
    if !moved_rows.is_empty() {
        let mut kept = String::new();
        let mut imports = String::new();
        for (i, l) in context.lines().enumerate() {
            let dest = if moved_rows.contains(&i) { &mut imports } else { &mut kept };
            dest.push_str(l);
            dest.push('\n');
        }
        context = kept;
        target = format!("{imports}{target}");
    }

    let intent = majority_intent(annotations).unwrap_or_else(|| comment_body(&cand.intent).trim().to_string());
    Ok(BenchmarkCase {
        id: cand.id.clone(),
        context,
        intent,
        intent_prefix: indentation(&cand.intent).to_string(),
        target,
        provenance: cand.provenance.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub count: usize,
    pub mean_context_loc: f64,
    pub mean_target_loc: f64,
    pub mean_intent_tokens: f64,
}

fn loc(text: &str) -> usize {
    text.lines().filter(|l| !l.trim().is_empty()).count()
}

/// Case count and mean non-blank lines of context and target, and mean
/// whitespace tokens of the intent.
pub fn benchmark_stats(cases: &[BenchmarkCase]) -> Result<BenchmarkStats, BenchError> {
    if cases.is_empty() {
        return Err(BenchError::EmptyBenchmark);
    }
    let n = cases.len() as f64;
    let mean = |f: &dyn Fn(&BenchmarkCase) -> usize| cases.iter().map(f).sum::<usize>() as f64 / n;
    Ok(BenchmarkStats {
        count: cases.len(),
        mean_context_loc: mean(&|c| loc(&c.context)),
        mean_target_loc: mean(&|c| loc(&c.target)),
        mean_intent_tokens: mean(&|c| c.intent.split_whitespace().count()),
    })
}

/// Root modules used by each target, from its imports and from calls
/// resolved against context and target together; each case counts a module
/// once. Cases whose target does not parse are skipped and their ids
/// returned.
pub fn module_distribution(cases: &[BenchmarkCase]) -> (ModuleFrequency, Vec<String>) {
    let empty = Default::default();
    let mut freq = ModuleFrequency::default();
    let mut skipped = Vec::new();
    for case in cases {
        let target = dedent(&case.target);
        let tree = pyast::parse(&target);
        if tree.root_node().has_error() {
            skipped.push(case.id.clone());
            continue;
        }
        let mut roots: BTreeSet<String> = pyast::imports(&tree, &target)
            .iter()
            .flat_map(|s| s.root_modules().map(str::to_string).collect::<Vec<_>>())
            .collect();
        let mut combined = case.context.clone();
        if !combined.is_empty() && !combined.ends_with('\n') {
            combined.push('\n');
        }
        let offset = combined.lines().count();
        combined.push_str(&case.target);
        for site in resolve_source_lenient(&combined, &case.id, &empty) {
            if site.statement_line >= offset {
                if let Some(f) = site.resolved_fqpn {
                    roots.insert(f.split(['.', '(']).next().unwrap_or_default().to_string());
                }
            }
        }
        for r in roots.into_iter().filter(|r| !r.is_empty()) {
            freq.add(&r, 1);
        }
    }
    (freq, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmine::Provenance;

    fn cand(context: &str, intent: &str, target: &str) -> CandidateCase {
        CandidateCase {
            id: "k".into(),
            context: context.into(),
            intent: intent.into(),
            target: target.into(),
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn lines_above_span_join_context() {
        let c = cand("import pandas as pd\ndf = pd.DataFrame()\n", "# show", "a = 1\nb = 2\nprint(df)\n");
        let b = postprocess(&c, (3, 3), &[]).unwrap();
        assert_eq!(b.context, "import pandas as pd\ndf = pd.DataFrame()\na = 1\nb = 2\n");
        assert_eq!(b.target, "print(df)\n");
        assert_eq!(b.intent, "show");
    }

    #[test]
    fn target_only_imports_move() {
        let c = cand(
            "import matplotlib.pyplot as plt\nimport numpy as np\nx = np.ones(3)\n",
            "# plot the data",
            "plt.plot(x)  # draw\nplt.show()\n",
        );
        let b = postprocess(&c, (1, 2), &[]).unwrap();
        assert_eq!(b.context, "import numpy as np\nx = np.ones(3)\n");
        assert_eq!(b.target, "import matplotlib.pyplot as plt\nplt.plot(x)\nplt.show()\n");
    }

    #[test]
    fn comments_stripped() {
        assert_eq!(strip_code_comments("x = 1  # note\n# gone\ny = '#kept'\n"), "x = 1\ny = '#kept'\n");
        assert_eq!(strip_code_comments("a\n\nb\n"), "a\n\nb\n");
    }

    #[test]
    fn majority_intent_or_original() {
        let c = cand("", "    # and now plot the data", "plot()\n");
        let ann = |who: &str, text: &str| AnnotationRecord {
            case_id: "k".into(),
            annotator_id: who.into(),
            relevant: true,
            revised_intent: text.into(),
            target_line_span: Some((1, 1)),
        };
        let b = postprocess(&c, (1, 1), &[ann("a", "plot the data"), ann("b", "plot the data"), ann("c", "x")]).unwrap();
        assert_eq!((b.intent.as_str(), b.intent_prefix.as_str()), ("plot the data", "    "));
        let b = postprocess(&c, (1, 1), &[ann("a", "plot"), ann("b", "plot the data")]).unwrap();
        assert_eq!(b.intent, "and now plot the data");
        assert!(postprocess(&c, (1, 2), &[]).is_err());
    }

    #[test]
    fn stats() {
        let case = BenchmarkCase {
            id: "1".into(),
            context: "a\nb\n\nc\nd\n".into(),
            intent: "one two three four five".into(),
            intent_prefix: String::new(),
            target: "x\ny\n".into(),
            provenance: Provenance::default(),
        };
        let s = benchmark_stats(&[case]).unwrap();
        assert_eq!(
            (s.count, s.mean_context_loc, s.mean_target_loc, s.mean_intent_tokens),
            (1, 4.0, 2.0, 5.0)
        );
        assert!(benchmark_stats(&[]).is_err());
    }

    #[test]
    fn module_usage_per_case() {
        let case = |ctx: &str, target: &str| BenchmarkCase {
            id: target.into(),
            context: ctx.into(),
            intent: "i".into(),
            intent_prefix: String::new(),
            target: target.into(),
            provenance: Provenance::default(),
        };
        let cases = vec![
            case("", "import pandas as pd\npd.read_csv('f')\n"),
            case("import pandas as pd\nimport numpy as np\n", "    df = pd.read_csv('f')\n"),
            case("", "x = y + 1\n"),
            case("", "def (:\n"),
        ];
        let (f, skipped) = module_distribution(&cases);
        assert_eq!(f.counts, BTreeMap::from([("pandas".to_string(), 2)]));
        assert_eq!(skipped, vec!["def (:\n".to_string()]);
    }
}
