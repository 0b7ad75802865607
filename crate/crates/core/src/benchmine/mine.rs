use std::collections::BTreeSet;

use aho_corasick::AhoCorasick;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CandidateCase, Provenance};
use crate::ingest::LanguageClassifier;
use crate::script::{
    comment_body, decode_indentation_tokens, ScriptDoc, ScriptLine, CELL, END_OF_COMMENT, END_OF_TEXT,
};

#[derive(Debug, Clone, Copy)]
pub struct MineOptions {
    pub max_intent_tokens: usize,
    /// Sample size; `None` keeps every eligible candidate.
    pub sample_n: Option<usize>,
    pub seed: u64,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            max_intent_tokens: 10,
            sample_n: None,
            seed: 0,
        }
    }
}

/// Whitespace-delimited tokens of a comment's text (marker excluded).
pub fn intent_token_count(comment_line: &str) -> usize {
    comment_body(comment_line).split_whitespace().count()
}

pub fn is_short_enough(comment_line: &str, max_tokens: usize) -> bool {
    let n = intent_token_count(comment_line);
    n > 0 && n <= max_tokens
}

/// Every eligible candidate of one script, in line order. A comment-only
/// line qualifies when it passes the length and language filters and at
/// least one non-blank code line follows it.
pub fn mine_script(doc: &ScriptDoc, max_intent_tokens: usize, classifier: &dyn LanguageClassifier) -> Vec<CandidateCase> {
    let lines: Vec<&ScriptLine> = doc.lines.iter().filter(|l| !l.is_boundary()).collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if !line.is_comment() {
            continue;
        }
        let text = line.text();
        if !is_short_enough(text, max_intent_tokens) || !classifier.is_english(comment_body(text)) {
            continue;
        }
        let following: Vec<&str> = lines[i + 1..]
            .iter()
            .filter(|l| l.is_code())
            .map(|l| l.text())
            .collect();
        let Some(first) = following.iter().position(|l| !l.trim().is_empty()) else {
            continue;
        };
        let last = following.iter().rposition(|l| !l.trim().is_empty()).expect("a non-blank line exists");
        let mut target = following[first..=last].join("\n");
        target.push('\n');
        let context: String = lines[..i].iter().map(|l| format!("{}\n", l.text())).collect();
        out.push(CandidateCase {
            id: format!("{}#L{}", doc.source, i + 1),
            context,
            intent: text.to_string(),
            target,
            provenance: Provenance {
                source: doc.source.clone(),
                line: i + 1,
            },
        });
    }
    out
}

/// Mine candidates from evaluation scripts, then draw a seeded uniform
/// sample without replacement. Output keeps corpus order.
pub fn mine_candidates(
    scripts: &[ScriptDoc],
    opts: MineOptions,
    classifier: &dyn LanguageClassifier,
) -> Vec<CandidateCase> {
    let per_script: Vec<Vec<CandidateCase>> = scripts
        .par_iter()
        .map(|d| mine_script(d, opts.max_intent_tokens, classifier))
        .collect();
    let all: Vec<CandidateCase> = per_script.into_iter().flatten().collect();
    match opts.sample_n {
        Some(n) if n < all.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked = sample(&mut rng, all.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i].clone()).collect()
        }
        _ => all,
    }
}

/// The last (up to) three non-empty context lines followed by the intent
/// line, joined with newlines.
pub fn probe(c: &CandidateCase) -> String {
    let mut tail: Vec<&str> = c.context.lines().rev().filter(|l| !l.trim().is_empty()).take(3).collect();
    tail.reverse();
    tail.push(&c.intent);
    tail.join("\n")
}

/// Plain text of a concatenated training file: indentation tokens decoded,
/// end-of-comment markers and cell-boundary lines removed, document
/// separators turned into line breaks.
pub fn normalize_training_corpus(corpus: &str) -> String {
    let mut out = String::with_capacity(corpus.len());
    for doc in corpus.split(END_OF_TEXT) {
        for line in decode_indentation_tokens(doc).lines() {
            if line == CELL {
                continue;
            }
            let line = line
                .strip_suffix(END_OF_COMMENT)
                .map(|s| s.strip_suffix(' ').unwrap_or(s))
                .unwrap_or(line);
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct OverlapOutcome {
    pub kept: Vec<CandidateCase>,
    pub dropped: Vec<CandidateCase>,
}

/// Drop candidates whose probe occurs verbatim in the (normalized)
/// training corpus.
pub fn overlap_filter(cands: Vec<CandidateCase>, train_corpus: &[u8]) -> OverlapOutcome {
    let corpus = normalize_training_corpus(&String::from_utf8_lossy(train_corpus));
    let probes: Vec<String> = cands.iter().map(probe).collect();
    let unique: Vec<&String> = probes.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut found = vec![false; unique.len()];
    if !corpus.is_empty() && !unique.is_empty() {
        let ac = AhoCorasick::new(&unique).expect("probe automaton builds");
        for m in ac.find_overlapping_iter(&corpus) {
            found[m.pattern().as_usize()] = true;
        }
    }
    let mut out = OverlapOutcome::default();
    for (c, p) in cands.into_iter().zip(&probes) {
        let idx = unique.binary_search(&p).expect("probe is indexed");
        if found[idx] {
            out.dropped.push(c);
        } else {
            out.kept.push(c);
        }
    }
    out
}
