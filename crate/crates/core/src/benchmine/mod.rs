//! Benchmark construction: candidate mining, the training-overlap filter,
//! curation agreement, and postprocessing into context/intent/target cases.

mod curate;
mod io;
mod mine;
mod post;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curate::{curation_accept, fleiss_kappa, span_difference, Acceptance};
pub use io::{read_annotations, read_benchmark, read_candidates, write_jsonl};
pub use mine::{
    intent_token_count, is_short_enough, mine_candidates, mine_script, normalize_training_corpus, overlap_filter,
    probe, MineOptions, OverlapOutcome,
};
pub use post::{benchmark_stats, dedent, module_distribution, postprocess, strip_code_comments, BenchmarkStats};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("case {case_id}: expected {expected} annotations, got {got}")]
    WrongAnnotatorCount {
        case_id: String,
        expected: usize,
        got: usize,
    },
    #[error("case {case_id}: annotator {annotator_id} marked it relevant without a valid line span")]
    InvalidSpan { case_id: String, annotator_id: String },
    #[error("case {case_id}: consensus span {first}-{last} is outside the {lines}-line target")]
    SpanOutOfRange {
        case_id: String,
        first: usize,
        last: usize,
        lines: usize,
    },
    #[error("relevance matrix is empty or ragged")]
    BadMatrix,
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Where a candidate came from: script path and 1-based line of the intent
/// comment in the plain rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCase {
    pub id: String,
    /// Plain source from the start of the file up to (not including) the
    /// intent line.
    pub context: String,
    /// The comment line, leading whitespace included.
    pub intent: String,
    /// Code lines following the intent, comment lines left out.
    pub target: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub case_id: String,
    pub annotator_id: String,
    pub relevant: bool,
    #[serde(default, deserialize_with = "null_as_empty")]
    pub revised_intent: String,
    /// 1-based inclusive line range within the candidate target.
    #[serde(default)]
    pub target_line_span: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub context: String,
    /// Intent text without the comment marker.
    pub intent: String,
    /// Leading whitespace of the original intent line.
    #[serde(default)]
    pub intent_prefix: String,
    pub target: String,
    #[serde(default)]
    pub provenance: Provenance,
}

fn null_as_empty<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(Option::<String>::deserialize(d)?.unwrap_or_default())
}
