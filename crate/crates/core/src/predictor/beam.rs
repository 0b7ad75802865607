use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{LanguageModel, PredictError};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub beam_width: usize,
    /// The stop token is masked at generated positions `1..=min_tokens`.
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub stop_token: TokenId,
}

impl DecoderConfig {
    pub fn new(stop_token: TokenId) -> Self {
        DecoderConfig {
            beam_width: 3,
            min_tokens: 10,
            max_tokens: 150,
            stop_token,
        }
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        let mut problems = Vec::new();
        if self.beam_width == 0 {
            problems.push("beam width must be at least 1".to_string());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            problems.push(format!(
                "need 0 < min_tokens <= max_tokens, got {} and {}",
                self.min_tokens, self.max_tokens
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PredictError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// A finished decoding hypothesis. `tokens` never includes the stop token;
/// `stopped` tells whether it ended on one or ran into the length limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Cumulative log-probability, stop token included.
    pub score: f64,
    pub stopped: bool,
}

fn rank(a: &(f64, Vec<TokenId>), b: &(f64, Vec<TokenId>)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Check a backend reply: one entry per vocabulary item, no NaN or
/// positive infinity, and probabilities summing to one within 1e-6.
pub fn check_distribution(logprobs: &[f64], vocab_size: usize) -> Result<(), String> {
    if logprobs.len() != vocab_size {
        return Err(format!("expected {vocab_size} log-probabilities, got {}", logprobs.len()));
    }
    if let Some(i) = logprobs.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(format!("invalid log-probability for token {i}"));
    }
    let total: f64 = logprobs.iter().map(|v| v.exp()).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(format!("probabilities sum to {total}"));
    }
    Ok(())
}

/// Next-token log-probabilities after `generated`, with the stop token
/// masked and the rest renormalized while fewer than `min_tokens` tokens
/// have been generated. If the backend gives the stop token all the mass,
/// the remaining tokens are taken as equally likely.
pub fn step_distribution(
    lm: &dyn LanguageModel,
    prompt: &[TokenId],
    generated: &[TokenId],
    cfg: &DecoderConfig,
) -> Result<Vec<f64>, PredictError> {
    let mut prefix = Vec::with_capacity(prompt.len() + generated.len());
    prefix.extend_from_slice(prompt);
    prefix.extend_from_slice(generated);
    let fail = |message: String| PredictError::Backend {
        prefix_len: prefix.len(),
        message,
    };
    let mut lp = lm.next_token_logprobs(&prefix).map_err(|e| fail(e.to_string()))?;
    check_distribution(&lp, lm.vocab_size()).map_err(fail)?;
    let stop = cfg.stop_token as usize;
    if generated.len() < cfg.min_tokens && stop < lp.len() {
        lp[stop] = f64::NEG_INFINITY;
        let rest = log_sum_exp(lp.iter().copied());
        if rest == f64::NEG_INFINITY {
            let others = lp.len() - 1;
            if others == 0 {
                return Err(fail("the stop token is the only token".into()));
            }
            let uniform = -(others as f64).ln();
            lp.iter_mut().enumerate().for_each(|(i, v)| *v = if i == stop { f64::NEG_INFINITY } else { uniform });
        } else {
            lp.iter_mut().for_each(|v| *v -= rest);
        }
    }
    Ok(lp)
}

fn search(lm: &dyn LanguageModel, prompt: &[TokenId], cfg: &DecoderConfig, width: usize) -> Result<Vec<Hypothesis>, PredictError> {
    let mut live: Vec<(f64, Vec<TokenId>)> = vec![(0.0, Vec::new())];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() && done.len() < width {
        let mut candidates: Vec<(f64, Vec<TokenId>)> = Vec::new();
        for (score, tokens) in &live {
            let lp = step_distribution(lm, prompt, tokens, cfg)?;
            let mut options: Vec<(f64, TokenId)> = lp
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| (*v, i as TokenId))
                .collect();
            // At most one option per hypothesis finishes on the stop token,
            // so width + 1 options always cover the next live beam.
            let keep = (width + 1).min(options.len());
            let by_prob = |a: &(f64, TokenId), b: &(f64, TokenId)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if keep < options.len() {
                options.select_nth_unstable_by(keep, by_prob);
                options.truncate(keep);
            }
            for (v, t) in options {
                let mut next = tokens.clone();
                next.push(t);
                candidates.push((score + v, next));
            }
        }
        candidates.sort_by(rank);
        live = Vec::with_capacity(width);
        for (score, mut tokens) in candidates {
            let last = *tokens.last().expect("candidates extend a prefix");
            if last == cfg.stop_token {
                tokens.pop();
                done.push(Hypothesis {
                    tokens,
                    score,
                    stopped: true,
                });
            } else if tokens.len() >= cfg.max_tokens {
                done.push(Hypothesis {
                    tokens,
                    score,
                    stopped: false,
                });
            } else {
                live.push((score, tokens));
                if live.len() == width {
                    break;
                }
            }
        }
    }
    Ok(done)
}

fn sort_hypotheses(h: &mut [Hypothesis]) {
    h.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
}

/// Beam search without length normalization. Finished hypotheses leave the
/// beam, whose free slots are refilled from the best live extensions; the
/// search ends once `beam_width` hypotheses are finished or nothing is left
/// alive. The greedy hypothesis is merged into the result, so the best
/// returned score is never below greedy decoding. Results are ranked by
/// score, at most `beam_width` of them.
pub fn beam_search(lm: &dyn LanguageModel, prompt: &[TokenId], cfg: &DecoderConfig) -> Result<Vec<Hypothesis>, PredictError> {
    cfg.validate()?;
    let mut found = search(lm, prompt, cfg, cfg.beam_width)?;
    if cfg.beam_width > 1 {
        for g in search(lm, prompt, cfg, 1)? {
            if !found.iter().any(|h| h.tokens == g.tokens && h.stopped == g.stopped) {
                found.push(g);
            }
        }
    }
    sort_hypotheses(&mut found);
    found.truncate(cfg.beam_width);
    if found.is_empty() {
        return Err(PredictError::Backend {
            prefix_len: prompt.len(),
            message: "no token with non-zero probability".into(),
        });
    }
    Ok(found)
}

/// Always extend with the most likely allowed token.
pub fn greedy(lm: &dyn LanguageModel, prompt: &[TokenId], cfg: &DecoderConfig) -> Result<Hypothesis, PredictError> {
    let cfg = DecoderConfig { beam_width: 1, ..*cfg };
    Ok(beam_search(lm, prompt, &cfg)?.remove(0))
}
