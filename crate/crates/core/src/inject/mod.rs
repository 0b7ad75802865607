//! Docstring-title comments inserted above resolved call sites.

mod resolve;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use resolve::{resolve_source, resolve_source_lenient, CallSite, ParseError, ResolutionEnv};

use crate::docmap::EntityDocMapping;
use crate::script::{indentation, ScriptDoc, ScriptLine};

/// Resolve every call site of `script`. Line numbers index `script.lines`.
pub fn resolve_calls(script: &ScriptDoc, mapping: &EntityDocMapping) -> Result<Vec<CallSite>, ParseError> {
    resolve_source(&script.parse_view(), &script.source, mapping)
}

/// Generator for one script: seeded from the run seed and the script path,
/// so results do not depend on processing order.
pub fn script_rng(seed: u64, path: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(path.as_bytes());
    let digest = h.finalize();
    ChaCha8Rng::from_seed(digest.into())
}

/// Insert `# <title>` above the enclosing statement of each resolved,
/// mapped site kept by an independent Bernoulli(`rate`) draw. Draws happen
/// in site order, one per mapped site.
pub fn inject_comments(
    script: &ScriptDoc,
    sites: &[CallSite],
    mapping: &EntityDocMapping,
    rate: f64,
    seed: u64,
) -> ScriptDoc {
    let mut rng = script_rng(seed, &script.source);
    inject_with_rng(script, sites, mapping, rate, &mut rng).0
}

/// As [`inject_comments`] with a caller-supplied generator; also returns the
/// number of comments inserted.
pub fn inject_with_rng(
    script: &ScriptDoc,
    sites: &[CallSite],
    mapping: &EntityDocMapping,
    rate: f64,
    rng: &mut impl Rng,
) -> (ScriptDoc, usize) {
    let rate = rate.clamp(0.0, 1.0);
    let mut above: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for site in sites {
        let Some(title) = site.resolved_fqpn.as_deref().and_then(|f| mapping.title(f)) else {
            continue;
        };
        if rng.gen_bool(rate) {
            above.entry(site.enclosing_statement_first_line).or_default().push(title);
        }
    }
    let inserted = above.values().map(Vec::len).sum();
    if inserted == 0 {
        return (script.clone(), 0);
    }
    let mut lines = Vec::with_capacity(script.lines.len() + inserted);
    for (i, line) in script.lines.iter().enumerate() {
        if let Some(titles) = above.get(&i) {
            let indent = indentation(line.text());
            for t in titles {
                lines.push(ScriptLine::comment(format!("{indent}# {t}")));
            }
        }
        lines.push(line.clone());
    }
    let mut out = ScriptDoc {
        lines,
        ..script.clone()
    };
    out.mark_end_of_comments();
    (out, inserted)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectReport {
    /// Call sites visited.
    pub visited: usize,
    /// Sites with a resolved FQPN.
    pub resolved: usize,
    /// Resolved sites whose FQPN is in the mapping.
    pub mapped: usize,
    /// Comments inserted.
    pub injected: usize,
    /// Scripts skipped because they do not parse.
    pub skipped: usize,
    pub resolution_rate: f64,
    pub mapped_rate: f64,
}

impl InjectReport {
    pub fn add_sites(&mut self, sites: &[CallSite], mapping: &EntityDocMapping) {
        self.visited += sites.len();
        for s in sites {
            if let Some(f) = &s.resolved_fqpn {
                self.resolved += 1;
                if mapping.title(f).is_some() {
                    self.mapped += 1;
                }
            }
        }
        self.update_rates();
    }

    pub fn merge(&mut self, other: &InjectReport) {
        self.visited += other.visited;
        self.resolved += other.resolved;
        self.mapped += other.mapped;
        self.injected += other.injected;
        self.skipped += other.skipped;
        self.update_rates();
    }

    fn update_rates(&mut self) {
        let v = self.visited.max(1) as f64;
        self.resolution_rate = if self.visited == 0 { 0.0 } else { self.resolved as f64 / v };
        self.mapped_rate = if self.visited == 0 { 0.0 } else { self.mapped as f64 / v };
    }
}

/// Full per-script step: optionally strip existing comments, resolve, and
/// inject. Unparsable scripts come back unchanged with `skipped = 1`.
pub fn inject_script(
    script: &ScriptDoc,
    mapping: &EntityDocMapping,
    rate: f64,
    seed: u64,
    strip_existing: bool,
) -> (ScriptDoc, InjectReport) {
    let mut base = script.clone();
    if strip_existing {
        base.strip_comments();
        base.mark_end_of_comments();
    }
    let mut report = InjectReport::default();
    match resolve_calls(&base, mapping) {
        Ok(sites) => {
            report.add_sites(&sites, mapping);
            let (out, n) = inject_with_rng(&base, &sites, mapping, rate, &mut script_rng(seed, &script.source));
            report.injected = n;
            (out, report)
        }
        Err(e) => {
            log::warn!("{e}");
            report.skipped = 1;
            (base, report)
        }
    }
}
