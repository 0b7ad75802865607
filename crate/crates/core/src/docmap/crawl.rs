//! Static crawl of package source trees for callable entities and their
//! docstrings.
//!
//! Every `.py` file under a source root becomes a module (`pkg/sub/__init__.py`
//! is `pkg.sub`). Module-level functions and classes are recorded together
//! with the module's top-level imports, so names re-exported by a package
//! (`from ._kmeans import KMeans` in `sklearn/cluster/__init__.py`) are found
//! under their public path. Methods include those inherited from base classes
//! that resolve inside the crawled trees.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tree_sitter::Node;

use super::docstring::{body_docstring, docstring_title};
use super::{DocEntry, EntityDocMapping};
use crate::pyast;

const MAX_RESOLVE_DEPTH: usize = 24;

/// One public callable seen by the crawl, documented or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitedEntity {
    pub fqpn: String,
    pub documented: bool,
}

#[derive(Debug, Default)]
pub struct CrawlReport {
    pub mapping: EntityDocMapping,
    /// Every public entity in FQPN order.
    pub visited: Vec<VisitedEntity>,
    /// Files that failed to parse, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Module paths provided by more than one file; the lexicographically
    /// first file wins.
    pub collisions: Vec<(String, PathBuf, PathBuf)>,
}

#[derive(Debug, Clone)]
struct Method {
    name: String,
    doc: Option<String>,
}

#[derive(Debug, Clone)]
enum DefKind {
    Function,
    Class {
        init_doc: Option<String>,
        methods: Vec<Method>,
        bases: Vec<Vec<String>>,
    },
}

#[derive(Debug, Clone)]
struct Def {
    name: String,
    doc: Option<String>,
    kind: DefKind,
}

#[derive(Debug, Clone)]
struct ModuleInfo {
    module: String,
    source_path: String,
    defs: Vec<Def>,
    /// Local name to absolute dotted target.
    aliases: Vec<(String, String)>,
    /// Modules star-imported at top level.
    stars: Vec<String>,
}

/// Crawl `roots` and build the FQPN to docstring-title mapping. An empty
/// `module_filter` keeps every root module.
pub fn crawl_docstrings(roots: &[PathBuf], module_filter: &BTreeSet<String>) -> CrawlReport {
    let mut report = CrawlReport::default();

    // (file, module path, is package, path shown in the mapping)
    let mut files: Vec<(PathBuf, String, bool, String)> = Vec::new();
    for root in roots {
        let mut found = Vec::new();
        walk(root, &mut found);
        for path in found {
            if let Some((module, is_package)) = module_path(root, &path) {
                let top = module.split('.').next().unwrap_or_default();
                if module_filter.is_empty() || module_filter.contains(top) {
                    let shown = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().into_owned();
                    files.push((path, module, is_package, shown));
                }
            }
        }
    }

    // One file per module path: keep the lexicographically first source.
    files.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut unique: Vec<(PathBuf, String, bool, String)> = Vec::new();
    for f in files {
        if let Some(prev) = unique.last() {
            if prev.1 == f.1 {
                log::warn!("module {} provided by {} and {}", f.1, prev.0.display(), f.0.display());
                report.collisions.push((f.1.clone(), prev.0.clone(), f.0.clone()));
                continue;
            }
        }
        unique.push(f);
    }

    let parsed: Vec<Result<ModuleInfo, (PathBuf, String)>> = unique
        .par_iter()
        .map(|(path, module, is_package, shown)| {
            let src = std::fs::read_to_string(path).map_err(|e| (path.clone(), e.to_string()))?;
            scan_module(&src, module, *is_package, shown)
                .ok_or_else(|| (path.clone(), "syntax error".to_string()))
        })
        .collect();

    let mut modules = Vec::new();
    for r in parsed {
        match r {
            Ok(m) => modules.push(m),
            Err((path, why)) => {
                log::warn!("skipping {}: {why}", path.display());
                report.skipped.push((path, why));
            }
        }
    }

    let index = Index::new(&modules);
    let mut entries = BTreeMap::new();
    let mut visited = BTreeMap::new();
    for (mi, m) in modules.iter().enumerate() {
        if !is_public_path(&m.module) {
            continue;
        }
        let root = m.module.split('.').next().unwrap_or_default();
        for name in index.exports(&m.module) {
            if name.starts_with('_') {
                continue;
            }
            let Some((dm, di)) = index.resolve(&format!("{}.{name}", m.module), 0) else {
                continue;
            };
            // Re-exports of other distributions are not part of this API.
            if dm != mi && modules[dm].module.split('.').next() != Some(root) {
                continue;
            }
            let def = &modules[dm].defs[di];
            let source = &modules[dm].source_path;
            let fqpn = format!("{}.{name}()", m.module);
            let doc = match &def.kind {
                DefKind::Function => def.doc.clone(),
                DefKind::Class { init_doc, .. } => def.doc.clone().or_else(|| init_doc.clone()),
            };
            record(&mut entries, &mut visited, fqpn.clone(), doc.as_deref(), source);
            if matches!(def.kind, DefKind::Class { .. }) {
                let mut methods = BTreeMap::new();
                index.collect_methods(dm, di, 0, &mut HashSet::new(), &mut methods);
                for (method, (doc, src_mod)) in methods {
                    record(
                        &mut entries,
                        &mut visited,
                        format!("{fqpn}.{method}()"),
                        doc.as_deref(),
                        &modules[src_mod].source_path,
                    );
                }
            }
        }
    }

    report.visited = visited
        .into_iter()
        .map(|(fqpn, documented)| VisitedEntity { fqpn, documented })
        .collect();
    report.mapping = EntityDocMapping {
        entries,
        visited: report.visited.len(),
        documented: report.visited.iter().filter(|v| v.documented).count(),
    };
    report
}

fn record(
    entries: &mut BTreeMap<String, DocEntry>,
    visited: &mut BTreeMap<String, bool>,
    fqpn: String,
    doc: Option<&str>,
    source: &str,
) {
    if visited.contains_key(&fqpn) {
        return;
    }
    let title = doc.and_then(docstring_title);
    visited.insert(fqpn.clone(), title.is_some());
    if let Some(title) = title {
        entries.insert(
            fqpn,
            DocEntry {
                title,
                source_path: source.to_string(),
            },
        );
    }
}

fn is_public_path(path: &str) -> bool {
    path.split('.').all(|s| !s.starts_with('_'))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(rd) = std::fs::read_dir(dir) else { return };
    let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with('.') || name == "__pycache__" {
            continue;
        }
        if p.is_dir() {
            walk(&p, out);
        } else if name.ends_with(".py") {
            out.push(p);
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_alphabetic()) && chars.all(|c| c == '_' || c.is_alphanumeric())
}

/// Dotted module path of `file` under `root`, and whether it is a package
/// `__init__`.
fn module_path(root: &Path, file: &Path) -> Option<(String, bool)> {
    let rel = file.strip_prefix(root).ok()?;
    let mut parts: Vec<String> = rel.iter().map(|c| c.to_string_lossy().into_owned()).collect();
    let last = parts.pop()?;
    let stem = last.strip_suffix(".py")?;
    let is_package = stem == "__init__";
    if !is_package {
        parts.push(stem.to_string());
    }
    if parts.is_empty() || !parts.iter().all(|p| is_identifier(p)) {
        return None;
    }
    Some((parts.join("."), is_package))
}

fn scan_module(src: &str, module: &str, is_package: bool, source_path: &str) -> Option<ModuleInfo> {
    let tree = pyast::parse(src);
    let root = tree.root_node();
    if root.has_error() {
        return None;
    }
    let package = if is_package {
        module.to_string()
    } else {
        module.rsplit_once('.').map(|(p, _)| p.to_string()).unwrap_or_default()
    };
    let mut info = ModuleInfo {
        module: module.to_string(),
        source_path: source_path.to_string(),
        defs: Vec::new(),
        aliases: Vec::new(),
        stars: Vec::new(),
    };
    scan_block(root, src, &package, &mut info);
    Some(info)
}

/// Absolute form of a relative import base.
fn absolute(package: &str, level: usize, rest: &str) -> Option<String> {
    if level == 0 {
        return Some(rest.to_string());
    }
    let mut parts: Vec<&str> = if package.is_empty() { Vec::new() } else { package.split('.').collect() };
    for _ in 1..level {
        parts.pop()?;
    }
    if !rest.is_empty() {
        parts.push(rest);
    }
    (!parts.is_empty()).then(|| parts.join("."))
}

fn scan_block(block: Node<'_>, src: &str, package: &str, info: &mut ModuleInfo) {
    let mut cursor = block.walk();
    for child in block.named_children(&mut cursor) {
        match child.kind() {
            "function_definition" | "class_definition" => {
                if let Some(def) = scan_def(child, src) {
                    info.defs.push(def);
                }
            }
            "decorated_definition" => {
                if let Some(def) = child.child_by_field_name("definition").and_then(|d| scan_def(d, src)) {
                    info.defs.push(def);
                }
            }
            "import_statement" | "import_from_statement" => scan_import(child, src, package, info),
            // Conditional imports and definitions (`try: ... except ImportError:`).
            "if_statement" | "try_statement" | "with_statement" | "block" | "else_clause" | "elif_clause"
            | "except_clause" | "finally_clause" => scan_block(child, src, package, info),
            _ => {}
        }
    }
}

fn scan_import(node: Node<'_>, src: &str, package: &str, info: &mut ModuleInfo) {
    let Some(stmt) = pyast::import_stmt(node, src) else { return };
    if node.kind() == "import_from_statement" {
        let mut c = node.walk();
        if node.named_children(&mut c).any(|n| n.kind() == "wildcard_import") {
            let base = node
                .child_by_field_name("module_name")
                .map(|m| pyast::text(m, src).trim_start_matches('.').to_string())
                .unwrap_or_default();
            if let Some(target) = absolute(package, stmt.relative_level, &base) {
                info.stars.push(target);
            }
            return;
        }
    }
    for b in stmt.bindings {
        if let Some(target) = absolute(package, stmt.relative_level, &b.target) {
            info.aliases.push((b.local, target));
        }
    }
}

fn scan_def(node: Node<'_>, src: &str) -> Option<Def> {
    let name = pyast::text(node.child_by_field_name("name")?, src).to_string();
    let body = node.child_by_field_name("body")?;
    let doc = body_docstring(body, src);
    if node.kind() == "function_definition" {
        return Some(Def {
            name,
            doc,
            kind: DefKind::Function,
        });
    }
    let mut bases = Vec::new();
    if let Some(args) = node.child_by_field_name("superclasses") {
        let mut c = args.walk();
        for a in args.named_children(&mut c) {
            if let Some(chain) = pyast::dotted_chain(a, src) {
                bases.push(chain);
            }
        }
    }
    let mut init_doc = None;
    let mut methods = Vec::new();
    let mut c = body.walk();
    for member in body.named_children(&mut c) {
        let f = match member.kind() {
            "function_definition" => member,
            "decorated_definition" => match member.child_by_field_name("definition") {
                Some(d) if d.kind() == "function_definition" => d,
                _ => continue,
            },
            _ => continue,
        };
        let Some(mname) = f.child_by_field_name("name").map(|n| pyast::text(n, src).to_string()) else {
            continue;
        };
        let mdoc = f.child_by_field_name("body").and_then(|b| body_docstring(b, src));
        if mname == "__init__" {
            init_doc = mdoc;
        } else if !mname.starts_with('_') {
            methods.push(Method { name: mname, doc: mdoc });
        }
    }
    Some(Def {
        name,
        doc,
        kind: DefKind::Class {
            init_doc,
            methods,
            bases,
        },
    })
}

struct Index<'a> {
    modules: &'a [ModuleInfo],
    by_module: HashMap<&'a str, usize>,
    defs: HashMap<String, (usize, usize)>,
    aliases: HashMap<String, String>,
}

impl<'a> Index<'a> {
    fn new(modules: &'a [ModuleInfo]) -> Self {
        let mut defs = HashMap::new();
        let mut aliases = HashMap::new();
        for (mi, m) in modules.iter().enumerate() {
            for (local, target) in &m.aliases {
                aliases.insert(format!("{}.{local}", m.module), target.clone());
            }
            // Definitions shadow imports of the same name.
            for (di, d) in m.defs.iter().enumerate() {
                let key = format!("{}.{}", m.module, d.name);
                aliases.remove(&key);
                defs.insert(key, (mi, di));
            }
        }
        let by_module = modules.iter().enumerate().map(|(i, m)| (m.module.as_str(), i)).collect();
        Index {
            modules,
            by_module,
            defs,
            aliases,
        }
    }

    /// Names reachable as attributes of `module`.
    fn exports(&self, module: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_exports(module, &mut HashSet::new(), &mut out);
        out
    }

    fn collect_exports(&self, module: &str, seen: &mut HashSet<String>, out: &mut BTreeSet<String>) {
        if !seen.insert(module.to_string()) {
            return;
        }
        let Some(&mi) = self.by_module.get(module) else { return };
        let m = &self.modules[mi];
        out.extend(m.defs.iter().map(|d| d.name.clone()));
        out.extend(m.aliases.iter().map(|(l, _)| l.clone()));
        for star in &m.stars {
            let mut inner = BTreeSet::new();
            self.collect_exports(star, seen, &mut inner);
            out.extend(inner.into_iter().filter(|n| !n.starts_with('_')));
        }
    }

    fn resolve(&self, path: &str, depth: usize) -> Option<(usize, usize)> {
        if depth > MAX_RESOLVE_DEPTH {
            return None;
        }
        if let Some(d) = self.defs.get(path) {
            return Some(*d);
        }
        if let Some(target) = self.aliases.get(path) {
            if target != path {
                return self.resolve(target, depth + 1);
            }
        }
        let (module, name) = path.rsplit_once('.')?;
        if let Some(&mi) = self.by_module.get(module) {
            for star in &self.modules[mi].stars {
                if let Some(hit) = self.resolve(&format!("{star}.{name}"), depth + 1) {
                    return Some(hit);
                }
            }
        }
        // An aliased prefix: `mod.np.zeros` through `np -> numpy`.
        let mut prefix = module;
        loop {
            if let Some(target) = self.aliases.get(prefix) {
                let rest = &path[prefix.len()..];
                return self.resolve(&format!("{target}{rest}"), depth + 1);
            }
            prefix = prefix.rsplit_once('.')?.0;
        }
    }

    /// Public methods of a class including inherited ones, first definition
    /// in a depth-first left-to-right walk wins.
    fn collect_methods(
        &self,
        mi: usize,
        di: usize,
        depth: usize,
        seen: &mut HashSet<(usize, usize)>,
        out: &mut BTreeMap<String, (Option<String>, usize)>,
    ) {
        if depth > MAX_RESOLVE_DEPTH || !seen.insert((mi, di)) {
            return;
        }
        let DefKind::Class { methods, bases, .. } = &self.modules[mi].defs[di].kind else {
            return;
        };
        for m in methods {
            out.entry(m.name.clone()).or_insert((m.doc.clone(), mi));
        }
        let module = &self.modules[mi].module;
        for base in bases {
            let dotted = base.join(".");
            let hit = self
                .resolve(&format!("{module}.{dotted}"), 0)
                .or_else(|| self.resolve(&dotted, 0));
            if let Some((bm, bd)) = hit {
                self.collect_methods(bm, bd, depth + 1, seen, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (rel, body) in files {
            let p = dir.path().join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, body).unwrap();
        }
        dir
    }

    #[test]
    fn module_paths() {
        let r = Path::new("/r");
        assert_eq!(module_path(r, Path::new("/r/a/b.py")), Some(("a.b".into(), false)));
        assert_eq!(module_path(r, Path::new("/r/a/__init__.py")), Some(("a".into(), true)));
        assert_eq!(module_path(r, Path::new("/r/a-b/c.py")), None);
        assert_eq!(absolute("a.b", 1, "c"), Some("a.b.c".into()));
        assert_eq!(absolute("a.b", 2, "c"), Some("a.c".into()));
        assert_eq!(absolute("a", 3, "c"), None);
    }

    #[test]
    fn reexported_class_and_inherited_methods() {
        let dir = tree(&[
            ("sk/__init__.py", ""),
            (
                "sk/base.py",
                "class Base:\n    def fit(self, X):\n        \"\"\"Fit the model. Long.\"\"\"\n    def _hidden(self):\n        \"\"\"No.\"\"\"\n",
            ),
            ("sk/cluster/__init__.py", "from ._kmeans import KMeans\n__all__ = ['KMeans']\n"),
            (
                "sk/cluster/_kmeans.py",
                "from ..base import Base\n\nclass KMeans(Base):\n    \"\"\"K-Means clustering.\"\"\"\n    def predict(self, X):\n        \"\"\"Predict the closest cluster.\"\"\"\n    def score(self):\n        pass\n",
            ),
        ]);
        let r = crawl_docstrings(&[dir.path().to_path_buf()], &BTreeSet::new());
        let titles: Vec<(&str, &str)> = r
            .mapping
            .entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.title.as_str()))
            .collect();
        assert_eq!(
            titles,
            vec![
                ("sk.base.Base().fit()", "Fit the model"),
                ("sk.cluster.KMeans()", "K-Means clustering"),
                ("sk.cluster.KMeans().fit()", "Fit the model"),
                ("sk.cluster.KMeans().predict()", "Predict the closest cluster"),
            ]
        );
        // Undocumented Base() and score() are visited but not mapped.
        assert!(r.visited.iter().any(|v| v.fqpn == "sk.base.Base()" && !v.documented));
        assert!(r.visited.iter().any(|v| v.fqpn == "sk.cluster.KMeans().score()" && !v.documented));
        assert!(r.visited.iter().all(|v| !v.fqpn.contains("._")));
    }

    #[test]
    fn init_docstring_fallback_star_exports_and_filter() {
        let dir = tree(&[
            ("np/__init__.py", "from .core import *\nimport os\n"),
            (
                "np/core.py",
                "def zeros(n):\n    'Return a new array of zeros.'\n\nclass Grid:\n    def __init__(self):\n        \"\"\"Build a grid.\"\"\"\n\ndef _private():\n    \"\"\"Hidden.\"\"\"\n",
            ),
            ("other/__init__.py", "def f():\n    \"\"\"Other.\"\"\"\n"),
        ]);
        let filter: BTreeSet<String> = ["np".to_string()].into();
        let r = crawl_docstrings(&[dir.path().to_path_buf()], &filter);
        let m = &r.mapping;
        assert_eq!(m.title("np.zeros()"), Some("Return a new array of zeros"));
        assert_eq!(m.title("np.core.zeros()"), Some("Return a new array of zeros"));
        assert_eq!(m.title("np.Grid()"), Some("Build a grid"));
        assert_eq!(m.title("other.f()"), None);
        assert!(m.entries.keys().all(|k| !k.contains("_private") && !k.contains(".os")));
        // Independent recount over the crawl log.
        let documented = r.visited.iter().filter(|v| v.documented).count();
        assert_eq!(m.coverage(), documented as f64 / r.visited.len() as f64);
    }

    #[test]
    fn broken_files_are_skipped() {
        let dir = tree(&[("p/__init__.py", "def f(:\n"), ("p/ok.py", "def g():\n    \"\"\"G.\"\"\"\n")]);
        let r = crawl_docstrings(&[dir.path().to_path_buf()], &BTreeSet::new());
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.mapping.title("p.ok.g()"), Some("G"));
    }
}
