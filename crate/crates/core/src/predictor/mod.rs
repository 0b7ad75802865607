//! Prompt assembly and constrained beam-search decoding against a
//! pluggable next-token model.

mod beam;
mod external;
mod ngram;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmine::BenchmarkCase;
use crate::script::{decode_indentation_tokens, encode_indentation, ScriptDoc, END_OF_COMMENT, END_OF_TEXT};
use crate::tokenizer::{TokenId, Tokenizer};

pub use beam::{beam_search, check_distribution, greedy, step_distribution, DecoderConfig, Hypothesis};
pub use external::{serve, ExternalModel, Request, Response, PROTOCOL_VERSION};
pub use ngram::{train_ngram, NgramModel, BACKOFF, NGRAM_FORMAT};

pub const DEFAULT_MAX_CONTEXT: usize = 700;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("intent is empty")]
    IntentEmpty,
    #[error("invalid decoder settings: {0}")]
    InvalidConfig(String),
    #[error("backend failed after a {prefix_len}-token prefix: {message}")]
    Backend { prefix_len: usize, message: String },
    #[error("training token stream is empty")]
    EmptyCorpus,
    #[error("tokenizer has no {0} token")]
    MissingSpecial(&'static str),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// Next-token distribution over a fixed vocabulary.
pub trait LanguageModel: Send + Sync {
    fn backend_id(&self) -> String;

    fn vocab_size(&self) -> usize;

    /// Log-probability of every vocabulary item following `prefix`; an
    /// impossible token is negative infinity.
    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, BackendError>;

    /// Whether concurrent queries are welcome. Backends answering `false`
    /// are driven from a single thread.
    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub context_tokens: Vec<TokenId>,
    /// Intent comment followed by the end-of-comment marker.
    pub intent_tokens: Vec<TokenId>,
    pub max_context: usize,
}

impl PromptSpec {
    pub fn tokens(&self) -> Vec<TokenId> {
        let mut t = self.context_tokens.clone();
        t.extend_from_slice(&self.intent_tokens);
        t
    }

    pub fn len(&self) -> usize {
        self.context_tokens.len() + self.intent_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Build the model input for one case. The context is rendered the way
/// training files are (indentation tokens, end-of-comment markers), the
/// intent becomes the comment line `{prefix}# {intent}` followed by the
/// end-of-comment marker, and the oldest context tokens are dropped to fit
/// `max_context`. An intent longer than the budget keeps its last tokens.
pub fn assemble_prompt(
    context: &str,
    intent: &str,
    intent_prefix: &str,
    tok: &Tokenizer,
    max_context: usize,
) -> Result<PromptSpec, PredictError> {
    let intent = intent.trim();
    if intent.is_empty() {
        return Err(PredictError::IntentEmpty);
    }
    if max_context == 0 {
        return Err(PredictError::InvalidConfig("context length must be positive".into()));
    }
    let marker = tok.special_id(END_OF_COMMENT).ok_or(PredictError::MissingSpecial(END_OF_COMMENT))?;
    let mut intent_tokens = tok.encode(&format!("{} ", encode_indentation(&format!("{intent_prefix}# {intent}"))));
    intent_tokens.push(marker);
    if intent_tokens.len() > max_context {
        intent_tokens.drain(..intent_tokens.len() - max_context);
    }
    let mut context_tokens = if context.is_empty() {
        Vec::new()
    } else {
        tok.encode(&ScriptDoc::from_source(context).render_training())
    };
    let budget = max_context - intent_tokens.len();
    if context_tokens.len() > budget {
        context_tokens.drain(..context_tokens.len() - budget);
    }
    Ok(PromptSpec {
        context_tokens,
        intent_tokens,
        max_context,
    })
}

/// Source text of generated tokens: indentation tokens expanded, anything
/// after an end-of-text symbol cut, the line break that follows the
/// end-of-comment marker removed, and trailing blank lines dropped.
pub fn detokenize(tok: &Tokenizer, tokens: &[TokenId]) -> Result<String, PredictError> {
    let raw = tok.decode(tokens).map_err(|e| PredictError::Format(e.to_string()))?;
    let raw = raw.split(END_OF_TEXT).next().unwrap_or_default();
    let text = decode_indentation_tokens(raw);
    let text = text.strip_prefix('\n').unwrap_or(&text);
    let mut out = text.trim_end().to_string();
    if !out.is_empty() {
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub prediction: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction: String,
    pub score: Option<f64>,
    /// Every ranked hypothesis, the top one included.
    #[serde(default)]
    pub alternatives: Vec<Alternative>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct PredictOptions {
    pub decoder: DecoderConfig,
    pub max_context: usize,
    /// Record wall-clock decoding time (makes output differ between runs).
    pub record_latency: bool,
}

fn decode_case(
    case: &BenchmarkCase,
    lm: &dyn LanguageModel,
    tok: &Tokenizer,
    opts: &PredictOptions,
) -> Result<Vec<Alternative>, PredictError> {
    let prompt = assemble_prompt(&case.context, &case.intent, &case.intent_prefix, tok, opts.max_context)?;
    beam_search(lm, &prompt.tokens(), &opts.decoder)?
        .into_iter()
        .map(|h| {
            Ok(Alternative {
                prediction: detokenize(tok, &h.tokens)?,
                score: h.score,
            })
        })
        .collect()
}

/// Predict one case. Failures are reported in the record, not returned.
pub fn predict_case(
    case: &BenchmarkCase,
    lm: &dyn LanguageModel,
    tok: &Tokenizer,
    opts: &PredictOptions,
) -> PredictionRecord {
    let start = Instant::now();
    let outcome = decode_case(case, lm, tok, opts);
    let latency_ms = opts.record_latency.then(|| start.elapsed().as_secs_f64() * 1000.0);
    let mut record = PredictionRecord {
        id: case.id.clone(),
        prediction: String::new(),
        score: None,
        alternatives: Vec::new(),
        latency_ms,
        backend_id: lm.backend_id(),
        error: None,
    };
    match outcome {
        Ok(alts) => {
            record.prediction = alts[0].prediction.clone();
            record.score = Some(alts[0].score);
            record.alternatives = alts;
        }
        Err(e) => {
            log::warn!("case {}: {e}", case.id);
            record.error = Some(e.to_string());
        }
    }
    record
}

/// One record per case, in input order.
pub fn predict_batch(
    cases: &[BenchmarkCase],
    lm: &dyn LanguageModel,
    tok: &Tokenizer,
    opts: &PredictOptions,
) -> Vec<PredictionRecord> {
    if lm.concurrent() {
        cases.par_iter().map(|c| predict_case(c, lm, tok, opts)).collect()
    } else {
        cases.iter().map(|c| predict_case(c, lm, tok, opts)).collect()
    }
}
