//! Independent reference implementations used to check the library.

use std::collections::BTreeMap;

use nlgp::benchmine::{probe, AnnotationRecord, CandidateCase, Provenance};
use nlgp::ingest::concatenate_training_file;
use nlgp::predictor::{BackendError, LanguageModel};
use nlgp::script::{ScriptDoc, Split};
use nlgp::tokenizer::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random next-token model: every prefix gets its own distribution drawn
/// from a generator seeded by `(seed, prefix)`. About a fifth of the tokens
/// are impossible at each step.
pub struct ToyModel {
    pub seed: u64,
    pub vocab: usize,
}

impl ToyModel {
    pub fn probabilities(&self, prefix: &[TokenId]) -> Vec<f64> {
        let key = prefix
            .iter()
            .fold(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15), |h, t| {
                h.wrapping_mul(1_000_003).wrapping_add(*t as u64 + 1)
            });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut w: Vec<f64> = (0..self.vocab)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.01..1.0) })
            .collect();
        if w.iter().all(|v| *v == 0.0) {
            w[rng.gen_range(0..self.vocab)] = 1.0;
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    }
}

impl LanguageModel for ToyModel {
    fn backend_id(&self) -> String {
        format!("toy-{}", self.seed)
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        Ok(self.probabilities(prefix).into_iter().map(f64::ln).collect())
    }
}

/// Per-step probabilities with the stop token suppressed before `min`
/// generated tokens, computed in probability space.
fn allowed(lm: &ToyModel, prompt: &[TokenId], generated: &[TokenId], stop: TokenId, min: usize) -> Vec<f64> {
    let mut prefix = prompt.to_vec();
    prefix.extend_from_slice(generated);
    let mut p = lm.probabilities(&prefix);
    if generated.len() < min {
        p[stop as usize] = 0.0;
        let rest: f64 = p.iter().sum();
        if rest == 0.0 {
            let share = 1.0 / (p.len() - 1) as f64;
            p.iter_mut().enumerate().for_each(|(i, v)| *v = if i == stop as usize { 0.0 } else { share });
        } else {
            p.iter_mut().for_each(|v| *v /= rest);
        }
    }
    p
}

/// Log-probability of a finished sequence under the decoding rules, or
/// `None` if it is not a legal output.
pub fn sequence_score(
    lm: &ToyModel,
    prompt: &[TokenId],
    tokens: &[TokenId],
    stopped: bool,
    stop: TokenId,
    min: usize,
    max: usize,
) -> Option<f64> {
    if tokens.contains(&stop) || tokens.len() > max || (!stopped && tokens.len() != max) {
        return None;
    }
    let mut full = tokens.to_vec();
    if stopped {
        full.push(stop);
    }
    let mut total = 0.0;
    for i in 0..full.len() {
        let p = allowed(lm, prompt, &full[..i], stop, min)[full[i] as usize];
        if p == 0.0 {
            return None;
        }
        total += p.ln();
    }
    Some(total)
}

/// Best legal output by enumerating every sequence: `(score, tokens, stopped)`.
pub fn exhaustive_best(
    lm: &ToyModel,
    prompt: &[TokenId],
    stop: TokenId,
    min: usize,
    max: usize,
) -> (f64, Vec<TokenId>, bool) {
    let mut best = (f64::NEG_INFINITY, Vec::new(), false);
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((gen, score)) = stack.pop() {
        let p = allowed(lm, prompt, &gen, stop, min);
        for (t, pt) in p.iter().enumerate() {
            if *pt == 0.0 {
                continue;
            }
            let s = score + pt.ln();
            let t = t as TokenId;
            if t == stop {
                if s > best.0 {
                    best = (s, gen.clone(), true);
                }
                continue;
            }
            let mut next = gen.clone();
            next.push(t);
            if next.len() == max {
                if s > best.0 {
                    best = (s, next, false);
                }
            } else {
                stack.push((next, s));
            }
        }
    }
    best
}

/// Number of finished sequences the enumeration visits.
pub fn sequence_count(vocab: usize, max: usize) -> usize {
    (1..=max).map(|k| vocab.pow(k as u32)).sum()
}

/// Reference acceptance decision for one case: `(accepted, span, pair)`.
pub type Decision = (bool, Option<(usize, usize)>, Option<(String, String)>);

pub fn brute_force_accept(anns: &[&AnnotationRecord]) -> Decision {
    let mut sorted: Vec<&AnnotationRecord> = anns.to_vec();
    sorted.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    let votes = sorted.iter().filter(|a| a.relevant).count();
    if votes < 2 {
        return (false, None, None);
    }
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let (a, b) = (sorted[i], sorted[j]);
            if !(a.relevant && b.relevant) {
                continue;
            }
            let (sa, sb) = (a.target_line_span.unwrap(), b.target_line_span.unwrap());
            let close = (sa.0 as i64 - sb.0 as i64).abs() <= 2 && (sa.1 as i64 - sb.1 as i64).abs() <= 2;
            if close {
                return (true, Some(sa), Some((a.annotator_id.clone(), b.annotator_id.clone())));
            }
        }
    }
    (false, None, None)
}

pub fn group_by_case(anns: &[AnnotationRecord]) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
    let mut m: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in anns {
        m.entry(a.case_id.as_str()).or_default().push(a);
    }
    m
}

/// Fleiss' kappa from the textbook definition over arbitrary category
/// labels, summing over raters pairwise.
pub fn brute_force_kappa(matrix: &[Vec<bool>]) -> f64 {
    let n = matrix[0].len();
    let mut agreeing_pairs = 0usize;
    let mut counts: BTreeMap<bool, usize> = BTreeMap::new();
    for row in matrix {
        for (i, a) in row.iter().enumerate() {
            *counts.entry(*a).or_default() += 1;
            for b in &row[i + 1..] {
                if a == b {
                    agreeing_pairs += 1;
                }
            }
        }
    }
    let pairs_per_row = n * (n - 1) / 2;
    let p_observed = agreeing_pairs as f64 / (pairs_per_row * matrix.len()) as f64;
    let total = (n * matrix.len()) as f64;
    let p_expected: f64 = counts.values().map(|c| (*c as f64 / total).powi(2)).sum();
    if p_expected == 1.0 {
        return 1.0;
    }
    (p_observed - p_expected) / (1.0 - p_expected)
}

/// Random three-annotator fixture with spans inside a `lines`-line target.
pub fn random_annotations(rng: &mut ChaCha8Rng, cases: usize) -> Vec<AnnotationRecord> {
    let mut out = Vec::new();
    for c in 0..cases {
        let lines = rng.gen_range(1..12usize);
        let bias = rng.gen_range(0.2..0.95);
        let mut ids = ["ann-a", "ann-b", "ann-c"];
        if rng.gen_bool(0.5) {
            ids.reverse();
        }
        for who in ids {
            let relevant = rng.gen_bool(bias);
            let span = relevant.then(|| {
                let first = rng.gen_range(1..=lines);
                (first, rng.gen_range(first..=lines))
            });
            out.push(AnnotationRecord {
                case_id: format!("case-{c:03}"),
                annotator_id: who.into(),
                relevant,
                revised_intent: String::new(),
                target_line_span: span,
            });
        }
    }
    out
}

const LINES: [&str; 10] = [
    "import pandas as pd",
    "df = pd.read_csv('a.csv')",
    "# load the data",
    "x = df.head()",
    "print(x)",
    "for r in df.rows:",
    "    y = r + 1",
    "    # bump",
    "z = df.tail()",
    "# show it",
];

fn random_script(rng: &mut ChaCha8Rng, max_lines: usize) -> String {
    (0..rng.gen_range(0..=max_lines))
        .map(|_| format!("{}\n", LINES[rng.gen_range(0..LINES.len())]))
        .collect()
}

/// A training corpus over a small line alphabet, plus candidates of which
/// some copy a window of training lines verbatim.
pub struct OverlapFixture {
    /// Concatenated training file (markers, indentation tokens).
    pub corpus: String,
    /// Plain source of each training script.
    pub plain: Vec<String>,
    pub candidates: Vec<CandidateCase>,
}

impl OverlapFixture {
    pub fn generate(rng: &mut ChaCha8Rng) -> Self {
        let plain: Vec<String> = (0..rng.gen_range(1..5)).map(|_| random_script(rng, 12)).collect();
        let docs: Vec<ScriptDoc> = plain
            .iter()
            .map(|p| {
                let mut d = ScriptDoc::from_source(p);
                d.split = Split::Train;
                d.mark_end_of_comments();
                d
            })
            .collect();
        let mut pairs: Vec<(String, String)> = (0..rng.gen_range(1..12))
            .map(|_| (random_script(rng, 5), LINES[rng.gen_range(0..LINES.len())].to_string()))
            .collect();
        for _ in 0..rng.gen_range(0..4) {
            let lines: Vec<&str> = plain[rng.gen_range(0..plain.len())].lines().collect();
            if lines.len() < 2 {
                continue;
            }
            let end = rng.gen_range(1..lines.len());
            let start = end.saturating_sub(rng.gen_range(1..5));
            let context = lines[start..end].iter().map(|l| format!("{l}\n")).collect();
            pairs.push((context, lines[end].to_string()));
        }
        let candidates = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (context, intent))| CandidateCase {
                id: format!("c{i}"),
                context,
                intent,
                target: "pass\n".into(),
                provenance: Provenance::default(),
            })
            .collect();
        OverlapFixture {
            corpus: concatenate_training_file(&docs),
            plain,
            candidates,
        }
    }

    /// Whether the candidate's probe occurs verbatim in a training script.
    pub fn seen(&self, c: &CandidateCase) -> bool {
        let p = probe(c);
        self.plain.iter().any(|s| s.contains(&p))
    }
}
