//! Code-similarity metrics and their correlation with human ratings.

mod lex;
mod report;
mod score;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lex::{call_filter, lex_code, lex_spans, LexTokenSeq};
pub use report::{
    read_ratings, score_report, CaseScore, PredictionRow, RatingRecord, ScoreOptions, ScoreRow, ScoreTable,
    MISMATCH_THRESHOLD, REPORT_SCHEMA,
};
pub use score::{bleu, iou, pearson, Bleu, BLEU_ORDER};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("reference has no tokens")]
    EmptyReference,
    #[error("both token sequences are empty")]
    BothEmpty,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("a series has zero variance")]
    DegenerateVariance,
    #[error("unmatched ids: {}", .0.join(", "))]
    JoinMismatch(Vec<String>),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Four-point agreement scale used by raters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    StronglyDisagree,
    Disagree,
    Agree,
    StronglyAgree,
}

impl Rating {
    pub const ALL: [Rating; 4] = [
        Rating::StronglyDisagree,
        Rating::Disagree,
        Rating::Agree,
        Rating::StronglyAgree,
    ];
}

/// Position on the unit interval: 0, 1/3, 2/3, 1.
pub fn map_scale(r: Rating) -> f64 {
    match r {
        Rating::StronglyDisagree => 0.0,
        Rating::Disagree => 1.0 / 3.0,
        Rating::Agree => 2.0 / 3.0,
        Rating::StronglyAgree => 1.0,
    }
}
