//! Lexical tokens of Python code via the tree-sitter grammar.

use std::ops::Range;

use tree_sitter::Node;

use crate::pyast;

/// Tokens of one code fragment.
pub type LexTokenSeq = Vec<String>;

/// Leaves of the syntax tree in source order, with a whole string literal
/// kept as one token. Comments, zero-width (recovered) nodes and whitespace
/// are dropped; error regions still yield their leaves.
pub fn lex_spans(code: &str) -> Vec<(Range<usize>, String)> {
    let tree = pyast::parse(code);
    let mut out = Vec::new();
    collect(tree.root_node(), code, &mut out);
    out
}

fn collect(node: Node<'_>, code: &str, out: &mut Vec<(Range<usize>, String)>) {
    let kind = node.kind();
    if kind == "comment" || node.is_missing() || node.byte_range().is_empty() {
        return;
    }
    if node.child_count() == 0 || kind == "string" {
        let text = pyast::text(node, code);
        if !text.trim().is_empty() {
            out.push((node.byte_range(), text.to_string()));
        }
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect(child, code, out);
    }
}

pub fn lex_code(code: &str) -> LexTokenSeq {
    lex_spans(code).into_iter().map(|(_, t)| t).collect()
}

/// Tokens that make up the call surface of `code`: callee name chains,
/// the call parentheses, and keyword-argument names, in source order.
/// Positional arguments are dropped unless they contain calls themselves.
pub fn call_filter(code: &str) -> LexTokenSeq {
    let tree = pyast::parse(code);
    let mut keep: Vec<Range<usize>> = Vec::new();
    for node in pyast::preorder(tree.root_node()) {
        if node.kind() != "call" {
            continue;
        }
        if let Some(callee) = node.child_by_field_name("function") {
            if pyast::dotted_chain(callee, code).is_some() {
                chain_leaves(callee, &mut keep);
            }
        }
        let Some(args) = node.child_by_field_name("arguments") else { continue };
        if args.kind() == "argument_list" {
            let mut c = args.walk();
            for child in args.children(&mut c) {
                match child.kind() {
                    "(" | ")" => keep.push(child.byte_range()),
                    "keyword_argument" => {
                        if let Some(name) = child.child_by_field_name("name") {
                            keep.push(name.byte_range());
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    keep.sort_by_key(|r| r.start);
    lex_spans(code)
        .into_iter()
        .filter(|(r, _)| keep.binary_search_by_key(&r.start, |k| k.start).is_ok_and(|i| keep[i] == *r))
        .map(|(_, t)| t)
        .collect()
}

fn chain_leaves(node: Node<'_>, keep: &mut Vec<Range<usize>>) {
    match node.kind() {
        "identifier" => keep.push(node.byte_range()),
        "attribute" => {
            let mut c = node.walk();
            for child in node.children(&mut c) {
                match child.kind() {
                    "." => keep.push(child.byte_range()),
                    _ => chain_leaves(child, keep),
                }
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joined(t: &[String]) -> String {
        t.join(" ")
    }

    #[test]
    fn matplotlib_fixture() {
        let code = "from matplotlib import pyplot as plt\nplt.hist(means_100)\nplt.show()";
        assert_eq!(
            joined(&lex_code(code)),
            "from matplotlib import pyplot as plt plt . hist ( means_100 ) plt . show ( )"
        );
    }

    #[test]
    fn whitespace_comments_and_strings() {
        assert!(lex_code("").is_empty());
        assert_eq!(lex_code("x  =  1  # note"), vec!["x", "=", "1"]);
        assert_eq!(lex_code("s = f'a {b} c' + 'x y'"), vec!["s", "=", "f'a {b} c'", "+", "'x y'"]);
        assert_eq!(lex_code("a >= b ** 2"), vec!["a", ">=", "b", "**", "2"]);
    }

    #[test]
    fn error_tolerant() {
        let t = lex_code("df.plot(kind='bar'");
        assert_eq!(&t[..5], &["df", ".", "plot", "(", "kind"]);
        assert!(t.iter().all(|s| !s.trim().is_empty()));
    }

    #[test]
    fn call_surface() {
        assert_eq!(joined(&call_filter("plt.hist(means_100)")), "plt . hist ( )");
        assert!(call_filter("x = 1\ny = x + 2").is_empty());
        assert_eq!(
            joined(&call_filter("df = pd.read_csv('f.csv', delimiter=',')")),
            "pd . read_csv ( delimiter )"
        );
        assert_eq!(joined(&call_filter("f(g(x), k=h())")), "f ( g ( ) k h ( ) )");
        assert_eq!(joined(&call_filter("d['k'](x)")), "( )");
    }
}
