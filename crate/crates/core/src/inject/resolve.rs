//! Call-site resolution with a flow-sensitive, intra-file binding
//! environment.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use tree_sitter::Node;

use crate::docmap::EntityDocMapping;
use crate::pyast;

/// Names bound before the statement being resolved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResolutionEnv {
    /// `np -> numpy` from `import numpy as np`.
    pub alias_to_module: HashMap<String, String>,
    /// `KMeans -> sklearn.cluster.KMeans` from `from sklearn.cluster import KMeans`.
    pub name_to_fqpn: HashMap<String, String>,
    /// `k -> sklearn.cluster.KMeans()` after `k = KMeans()`.
    pub var_to_instance_fqpn: HashMap<String, String>,
}

impl ResolutionEnv {
    fn unbind(&mut self, name: &str) {
        self.alias_to_module.remove(name);
        self.name_to_fqpn.remove(name);
        self.var_to_instance_fqpn.remove(name);
    }

    /// FQPN for a call whose callee is the dotted chain `chain`, if the
    /// chain is one of the tracked forms.
    pub fn resolve_chain(&self, chain: &[String]) -> Option<String> {
        let (head, rest) = chain.split_first()?;
        if let Some(instance) = self.var_to_instance_fqpn.get(head) {
            // Only a direct method call on the instance.
            return match rest {
                [method] => Some(format!("{instance}.{method}()")),
                _ => None,
            };
        }
        if let Some(target) = self.name_to_fqpn.get(head) {
            return Some(dotted_call(target, rest));
        }
        if let Some(module) = self.alias_to_module.get(head) {
            return (!rest.is_empty()).then(|| dotted_call(module, rest));
        }
        None
    }
}

fn dotted_call(base: &str, rest: &[String]) -> String {
    let mut s = base.to_string();
    for part in rest {
        s.push('.');
        s.push_str(part);
    }
    s.push_str("()");
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub file: String,
    /// Zero-based line of the call expression.
    pub statement_line: usize,
    pub callee_text: String,
    pub resolved_fqpn: Option<String>,
    /// Zero-based first line of the enclosing statement (the decorator
    /// block for decorated definitions).
    pub enclosing_statement_first_line: usize,
    /// The enclosing statement is a decorated definition.
    pub decorated: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("{file}: source does not parse")]
pub struct ParseError {
    pub file: String,
}

/// True when a call result bound to a variable is tracked as an instance of
/// `fqpn`: the callee is a plain callable path (no method segment) and
/// either looks like a class name or has mapped methods.
fn is_constructor(fqpn: &str, mapping: &EntityDocMapping) -> bool {
    let Some(path) = fqpn.strip_suffix("()") else { return false };
    if path.contains("()") {
        return false;
    }
    let last = path.rsplit('.').next().unwrap_or(path);
    if last.chars().next().is_some_and(char::is_uppercase) {
        return true;
    }
    let prefix = format!("{fqpn}.");
    mapping.entries.range(prefix.clone()..).next().is_some_and(|(k, _)| k.starts_with(&prefix))
}

enum Event<'t> {
    Bind(Node<'t>),
    Call(Node<'t>, Node<'t>),
}

/// Visit every call expression of `src` (line-aligned with the script) and
/// resolve what can be resolved.
pub fn resolve_source(src: &str, file: &str, mapping: &EntityDocMapping) -> Result<Vec<CallSite>, ParseError> {
    let tree = pyast::parse(src);
    if tree.root_node().has_error() {
        return Err(ParseError { file: file.to_string() });
    }
    Ok(resolve_tree(&tree, src, file, mapping))
}

/// As [`resolve_source`], but resolves whatever the error-recovering parse
/// produced instead of rejecting sources with syntax errors.
pub fn resolve_source_lenient(src: &str, file: &str, mapping: &EntityDocMapping) -> Vec<CallSite> {
    resolve_tree(&pyast::parse(src), src, file, mapping)
}

fn resolve_tree(tree: &tree_sitter::Tree, src: &str, file: &str, mapping: &EntityDocMapping) -> Vec<CallSite> {
    let root = tree.root_node();

    // Bindings take effect at the end of their statement; calls see the
    // environment at the start of their enclosing statement.
    let mut events: Vec<(usize, u8, usize, Event)> = Vec::new();
    for (order, node) in pyast::preorder(root).into_iter().enumerate() {
        match node.kind() {
            "call" => {
                let stmt = enclosing_statement(node);
                events.push((stmt.start_byte(), 1, order, Event::Call(node, stmt)));
            }
            k if binds_names(k) => {
                // A loop target is bound before the body runs.
                let at = match node.child_by_field_name("body") {
                    Some(body) if k == "for_statement" => body.start_byte(),
                    _ => node.end_byte(),
                };
                events.push((at, 0, order, Event::Bind(node)));
            }
            _ => {}
        }
    }
    events.sort_by_key(|(pos, kind, order, _)| (*pos, *kind, *order));

    let mut env = ResolutionEnv::default();
    let mut sites = Vec::new();
    for (_, _, _, event) in events {
        match event {
            Event::Bind(node) => apply_binding(node, src, mapping, &mut env),
            Event::Call(call, stmt) => {
                let Some(callee) = call.child_by_field_name("function") else { continue };
                let resolved = pyast::dotted_chain(callee, src).and_then(|c| env.resolve_chain(&c));
                sites.push(CallSite {
                    file: file.to_string(),
                    statement_line: call.start_position().row,
                    callee_text: pyast::text(callee, src).to_string(),
                    resolved_fqpn: resolved,
                    enclosing_statement_first_line: stmt.start_position().row,
                    decorated: stmt.kind() == "decorated_definition",
                });
            }
        }
    }
    sites
}

/// Nearest statement containing `node`, widened to the decorator block of a
/// decorated definition.
fn enclosing_statement(node: Node<'_>) -> Node<'_> {
    let mut cur = node;
    while let Some(parent) = cur.parent() {
        if pyast::is_statement(parent.kind()) {
            return match parent.parent() {
                Some(pp) if pp.kind() == "decorated_definition" => pp,
                _ => parent,
            };
        }
        cur = parent;
    }
    cur
}

fn binds_names(kind: &str) -> bool {
    matches!(
        kind,
        "import_statement"
            | "import_from_statement"
            | "assignment"
            | "augmented_assignment"
            | "for_statement"
            | "for_in_clause"
            | "as_pattern"
            | "function_definition"
            | "class_definition"
            | "named_expression"
    )
}

fn apply_binding(node: Node<'_>, src: &str, mapping: &EntityDocMapping, env: &mut ResolutionEnv) {
    match node.kind() {
        "import_statement" | "import_from_statement" => {
            let Some(stmt) = pyast::import_stmt(node, src) else { return };
            for b in stmt.bindings {
                env.unbind(&b.local);
                if stmt.relative_level > 0 {
                    continue;
                }
                if node.kind() == "import_statement" {
                    env.alias_to_module.insert(b.local, b.target);
                } else {
                    env.name_to_fqpn.insert(b.local, b.target);
                }
            }
        }
        "assignment" => {
            let Some(left) = node.child_by_field_name("left") else { return };
            let mut names = Vec::new();
            target_names(left, src, &mut names);
            for n in &names {
                env.unbind(n);
            }
            if left.kind() != "identifier" {
                return;
            }
            let name = pyast::text(left, src).to_string();
            let Some(right) = node.child_by_field_name("right") else { return };
            match right.kind() {
                "call" => {
                    let Some(callee) = right.child_by_field_name("function") else { return };
                    // The environment here already lacks `name`, which is
                    // fine: `k = k()` cannot be a tracked constructor anyway.
                    let fqpn = pyast::dotted_chain(callee, src).and_then(|c| env.resolve_chain(&c));
                    if let Some(fqpn) = fqpn.filter(|f| is_constructor(f, mapping)) {
                        env.var_to_instance_fqpn.insert(name, fqpn);
                    }
                }
                "identifier" => {
                    let other = pyast::text(right, src);
                    if let Some(v) = env.var_to_instance_fqpn.get(other).cloned() {
                        env.var_to_instance_fqpn.insert(name.clone(), v);
                    }
                    if let Some(v) = env.alias_to_module.get(other).cloned() {
                        env.alias_to_module.insert(name.clone(), v);
                    }
                    if let Some(v) = env.name_to_fqpn.get(other).cloned() {
                        env.name_to_fqpn.insert(name, v);
                    }
                }
                _ => {}
            }
        }
        "augmented_assignment" | "for_statement" | "for_in_clause" => {
            if let Some(left) = node.child_by_field_name("left") {
                let mut names = Vec::new();
                target_names(left, src, &mut names);
                names.iter().for_each(|n| env.unbind(n));
            }
        }
        "as_pattern" => {
            if let Some(alias) = node.child_by_field_name("alias") {
                let mut names = Vec::new();
                target_names(alias, src, &mut names);
                names.iter().for_each(|n| env.unbind(n));
            }
        }
        "function_definition" | "class_definition" | "named_expression" => {
            if let Some(name) = node.child_by_field_name("name") {
                env.unbind(pyast::text(name, src));
            }
        }
        _ => {}
    }
}

/// Plain names bound by an assignment target.
fn target_names(node: Node<'_>, src: &str, out: &mut Vec<String>) {
    match node.kind() {
        "identifier" => out.push(pyast::text(node, src).to_string()),
        "pattern_list" | "tuple_pattern" | "list_pattern" | "expression_list" | "tuple" | "list" | "list_splat_pattern"
        | "parenthesized_expression" | "as_pattern_target" => {
            let mut c = node.walk();
            for child in node.named_children(&mut c) {
                target_names(child, src, out);
            }
        }
        _ => {}
    }
}
