use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pyast;
use crate::script::ScriptDoc;

/// Root module names of the Python standard library (bundled list).
pub fn stdlib_modules() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../../data/stdlib_modules.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleFrequency {
    pub counts: BTreeMap<String, u64>,
}

impl ModuleFrequency {
    pub fn add(&mut self, module: &str, n: u64) {
        if n > 0 {
            *self.counts.entry(module.to_string()).or_default() += n;
        }
    }

    pub fn merge(&mut self, other: &ModuleFrequency) {
        for (k, v) in &other.counts {
            self.add(k, *v);
        }
    }

    pub fn get(&self, module: &str) -> u64 {
        self.counts.get(module).copied().unwrap_or(0)
    }

    /// The `k` most frequent modules, by count descending then name. With
    /// `exclude_stdlib`, standard-library roots are left out first.
    pub fn top_k(&self, k: usize, exclude_stdlib: bool) -> Vec<(String, u64)> {
        let stdlib = stdlib_modules();
        let mut all: Vec<(String, u64)> = self
            .counts
            .iter()
            .filter(|(m, _)| !exclude_stdlib || !stdlib.contains(*m))
            .map(|(m, c)| (m.clone(), *c))
            .collect();
        all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    /// `module<TAB>count` lines in the given order.
    pub fn to_tsv(rows: &[(String, u64)]) -> String {
        rows.iter().map(|(m, c)| format!("{m}\t{c}\n")).collect()
    }
}

/// Root modules mentioned by one source text, one per import statement
/// (so `import a, a.b` credits `a` once).
pub fn import_roots_per_statement(src: &str) -> Option<Vec<BTreeSet<String>>> {
    let tree = pyast::parse(src);
    if tree.root_node().has_error() {
        return None;
    }
    Some(
        pyast::imports(&tree, src)
            .iter()
            .map(|s| s.root_modules().map(str::to_string).collect())
            .collect(),
    )
}

/// Count root-module mentions over `scripts`: one increment per import
/// statement per root module. Scripts that fail to parse are skipped and
/// their source names returned.
pub fn count_root_modules(scripts: &[ScriptDoc]) -> (ModuleFrequency, Vec<String>) {
    let per_script: Vec<Result<ModuleFrequency, String>> = scripts
        .par_iter()
        .map(|doc| {
            let roots = import_roots_per_statement(&doc.parse_view()).ok_or_else(|| doc.source.clone())?;
            let mut f = ModuleFrequency::default();
            for stmt in roots {
                for m in stmt {
                    f.add(&m, 1);
                }
            }
            Ok(f)
        })
        .collect();
    let mut total = ModuleFrequency::default();
    let mut skipped = Vec::new();
    for r in per_script {
        match r {
            Ok(f) => total.merge(&f),
            Err(src) => {
                log::warn!("skipping unparsable script {src}");
                skipped.push(src);
            }
        }
    }
    (total, skipped)
}
