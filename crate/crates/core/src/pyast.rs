//! Thin helpers over the tree-sitter Python grammar.

use std::cell::RefCell;

use tree_sitter::{Node, Parser, Tree};

thread_local! {
    static PARSER: RefCell<Parser> = RefCell::new({
        let mut p = Parser::new();
        p.set_language(&tree_sitter_python::LANGUAGE.into())
            .expect("tree-sitter-python grammar is ABI compatible");
        p
    });
}

pub fn parse(src: &str) -> Tree {
    PARSER.with(|p| p.borrow_mut().parse(src, None).expect("parser has a language set"))
}

/// True when the source parses without error or missing nodes.
pub fn parses_cleanly(src: &str) -> bool {
    !parse(src).root_node().has_error()
}

pub fn text<'a>(node: Node<'_>, src: &'a str) -> &'a str {
    &src[node.byte_range()]
}

/// Pre-order walk over every node under `root`.
pub fn preorder(root: Node<'_>) -> Vec<Node<'_>> {
    let mut out = Vec::new();
    let mut cursor = root.walk();
    loop {
        out.push(cursor.node());
        if cursor.goto_first_child() {
            continue;
        }
        loop {
            if cursor.goto_next_sibling() {
                break;
            }
            if !cursor.goto_parent() {
                return out;
            }
        }
    }
}

/// One name bound by an import statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportBinding {
    /// Name bound in the importing scope.
    pub local: String,
    /// Dotted path the name refers to.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportStmt {
    /// Zero-based first and last source line.
    pub start_line: usize,
    pub end_line: usize,
    /// Dotted module paths mentioned (`import a.b, c` gives `a.b`, `c`;
    /// `from a.b import c` gives `a.b`). Relative imports are left out.
    pub modules: Vec<String>,
    pub bindings: Vec<ImportBinding>,
    pub top_level: bool,
    /// Leading dots of a relative `from` import (0 when absolute).
    pub relative_level: usize,
}

impl ImportStmt {
    pub fn root_modules(&self) -> impl Iterator<Item = &str> {
        self.modules.iter().map(|m| m.split('.').next().unwrap_or(m))
    }
}

/// Collect import statements (`import ...` and `from ... import ...`) in
/// source order.
pub fn imports(tree: &Tree, src: &str) -> Vec<ImportStmt> {
    preorder(tree.root_node())
        .into_iter()
        .filter_map(|n| import_stmt(n, src))
        .collect()
}

pub fn import_stmt(node: Node<'_>, src: &str) -> Option<ImportStmt> {
    let top_level = node.parent().is_some_and(|p| p.kind() == "module");
    let mut stmt = ImportStmt {
        start_line: node.start_position().row,
        end_line: node.end_position().row,
        modules: Vec::new(),
        bindings: Vec::new(),
        top_level,
        relative_level: 0,
    };
    let mut cursor = node.walk();
    match node.kind() {
        "import_statement" => {
            for name in node.children_by_field_name("name", &mut cursor) {
                let (dotted, alias) = split_alias(name, src);
                stmt.modules.push(dotted.clone());
                match alias {
                    Some(a) => stmt.bindings.push(ImportBinding {
                        local: a,
                        target: dotted,
                    }),
                    None => {
                        let root = dotted.split('.').next().unwrap_or(&dotted).to_string();
                        stmt.bindings.push(ImportBinding {
                            local: root.clone(),
                            target: root,
                        });
                    }
                }
            }
        }
        "import_from_statement" => {
            let module = node.child_by_field_name("module_name")?;
            let base = if module.kind() == "relative_import" {
                let t = text(module, src);
                stmt.relative_level = t.chars().take_while(|c| *c == '.').count();
                t.trim_start_matches('.').to_string()
            } else {
                let m = text(module, src).to_string();
                stmt.modules.push(m.clone());
                m
            };
            for name in node.children_by_field_name("name", &mut cursor) {
                let (dotted, alias) = split_alias(name, src);
                let target = if base.is_empty() {
                    dotted.clone()
                } else {
                    format!("{base}.{dotted}")
                };
                stmt.bindings.push(ImportBinding {
                    local: alias.unwrap_or(dotted),
                    target,
                });
            }
        }
        _ => return None,
    }
    Some(stmt)
}

fn split_alias(node: Node<'_>, src: &str) -> (String, Option<String>) {
    if node.kind() == "aliased_import" {
        let name = node.child_by_field_name("name").map(|n| compact(text(n, src)));
        let alias = node.child_by_field_name("alias").map(|n| text(n, src).to_string());
        (name.unwrap_or_default(), alias)
    } else {
        (compact(text(node, src)), None)
    }
}

fn compact(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Dotted text of an identifier/attribute chain (`a.b.c`), `None` for any
/// other expression.
pub fn dotted_chain(node: Node<'_>, src: &str) -> Option<Vec<String>> {
    match node.kind() {
        "identifier" => Some(vec![text(node, src).to_string()]),
        "attribute" => {
            let mut head = dotted_chain(node.child_by_field_name("object")?, src)?;
            head.push(text(node.child_by_field_name("attribute")?, src).to_string());
            Some(head)
        }
        _ => None,
    }
}

/// Node kinds that count as one statement for comment placement. Clause
/// headers (`elif`, `except`, ...) are their own anchor lines.
pub fn is_statement(kind: &str) -> bool {
    matches!(
        kind,
        "expression_statement"
            | "return_statement"
            | "delete_statement"
            | "raise_statement"
            | "assert_statement"
            | "pass_statement"
            | "global_statement"
            | "nonlocal_statement"
            | "print_statement"
            | "exec_statement"
            | "import_statement"
            | "import_from_statement"
            | "future_import_statement"
            | "type_alias_statement"
            | "if_statement"
            | "for_statement"
            | "while_statement"
            | "try_statement"
            | "with_statement"
            | "match_statement"
            | "function_definition"
            | "class_definition"
            | "decorated_definition"
            | "elif_clause"
            | "except_clause"
            | "case_clause"
    )
}
