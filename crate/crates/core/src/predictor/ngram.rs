//! Count-based n-gram language model with stupid backoff.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{BackendError, LanguageModel, PredictError};
use crate::tokenizer::TokenId;

pub const NGRAM_FORMAT: &str = "nlgp-ngram/1";
pub const BACKOFF: f64 = 0.4;

type Table = HashMap<Vec<TokenId>, (u64, BTreeMap<TokenId, u64>)>;

#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    vocab_size: usize,
    /// `tables[k]` maps length-`k` contexts to their total count and the
    /// counts of the tokens that followed them.
    tables: Vec<Table>,
    unigram: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    order: usize,
    vocab_size: usize,
    backoff: f64,
    tables: Vec<Vec<ContextRecord>>,
}

/// Count every n-gram of order 1 to `order` in `tokens`.
pub fn train_ngram(tokens: &[TokenId], order: usize, vocab_size: usize) -> Result<NgramModel, PredictError> {
    if order == 0 {
        return Err(PredictError::InvalidConfig("n-gram order must be at least 1".into()));
    }
    if tokens.is_empty() {
        return Err(PredictError::EmptyCorpus);
    }
    if let Some(t) = tokens.iter().find(|t| **t as usize >= vocab_size) {
        return Err(PredictError::InvalidConfig(format!("token {t} is outside the {vocab_size}-token vocabulary")));
    }
    let mut tables: Vec<Table> = vec![HashMap::new(); order];
    for (i, &t) in tokens.iter().enumerate() {
        for (k, table) in tables.iter_mut().enumerate().take(i + 1) {
            let entry = table.entry(tokens[i - k..i].to_vec()).or_default();
            entry.0 += 1;
            *entry.1.entry(t).or_default() += 1;
        }
    }
    Ok(NgramModel::from_tables(order, vocab_size, tables))
}

impl NgramModel {
    fn from_tables(order: usize, vocab_size: usize, tables: Vec<Table>) -> Self {
        let mut unigram = vec![0.0; vocab_size];
        if let Some((total, counts)) = tables[0].get(&Vec::new()) {
            for (t, c) in counts {
                unigram[*t as usize] = *c as f64 / *total as f64;
            }
        }
        NgramModel {
            order,
            vocab_size,
            tables,
            unigram,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Stupid-backoff scores for the next token, normalized to
    /// probabilities. Contexts never seen contribute only the constant
    /// backoff factor, which normalization removes.
    pub fn probabilities(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut scores = self.unigram.clone();
        let longest = (self.order - 1).min(prefix.len());
        for k in 1..=longest {
            let context = &prefix[prefix.len() - k..];
            scores.iter_mut().for_each(|s| *s *= BACKOFF);
            if let Some((total, counts)) = self.tables[k].get(context) {
                for (t, c) in counts {
                    scores[*t as usize] = *c as f64 / *total as f64;
                }
            }
        }
        let sum: f64 = scores.iter().sum();
        scores.iter_mut().for_each(|s| *s /= sum);
        scores
    }

    pub fn to_json(&self) -> String {
        let tables = self
            .tables
            .iter()
            .map(|table| {
                let mut records: Vec<ContextRecord> = table
                    .iter()
                    .map(|(context, (_, counts))| ContextRecord {
                        context: context.clone(),
                        next: counts.iter().map(|(t, c)| (*t, *c)).collect(),
                    })
                    .collect();
                records.sort_by(|a, b| a.context.cmp(&b.context));
                records
            })
            .collect();
        serde_json::to_string(&ModelFile {
            format: NGRAM_FORMAT.into(),
            order: self.order,
            vocab_size: self.vocab_size,
            backoff: BACKOFF,
            tables,
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let bad = |m: String| PredictError::Format(m);
        let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != NGRAM_FORMAT {
            return Err(bad(format!("unsupported model format {:?}", file.format)));
        }
        if file.order == 0 || file.tables.len() != file.order {
            return Err(bad("table count does not match the model order".into()));
        }
        let mut tables = Vec::with_capacity(file.order);
        for (k, records) in file.tables.into_iter().enumerate() {
            let mut table = Table::new();
            for r in records {
                if r.context.len() != k || r.next.iter().any(|(t, _)| *t as usize >= file.vocab_size) {
                    return Err(bad(format!("malformed context record at order {}", k + 1)));
                }
                let counts: BTreeMap<TokenId, u64> = r.next.into_iter().filter(|(_, c)| *c > 0).collect();
                let total = counts.values().sum();
                if total == 0 {
                    return Err(bad(format!("context {:?} has no counts", r.context)));
                }
                table.insert(r.context, (total, counts));
            }
            tables.push(table);
        }
        if tables[0].is_empty() {
            return Err(PredictError::EmptyCorpus);
        }
        Ok(NgramModel::from_tables(file.order, file.vocab_size, tables))
    }
}

impl LanguageModel for NgramModel {
    fn backend_id(&self) -> String {
        format!("ngram-{}", self.order)
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        Ok(self.probabilities(prefix).into_iter().map(f64::ln).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bigram_hand_counts() {
        // a=0, b=1 in "a b a b": after a, b always (count 1.0); a itself
        // backs off to 0.4 * P(a) = 0.4 * 0.5.
        let m = train_ngram(&[0, 1, 0, 1], 2, 3).unwrap();
        let p = m.probabilities(&[0]);
        assert_relative_eq!(p[1], 1.0 / 1.2, epsilon = 1e-12);
        assert_relative_eq!(p[0], 0.2 / 1.2, epsilon = 1e-12);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn unigram_and_unseen_context() {
        let corpus = [0, 1, 1, 2, 2, 2];
        let m = train_ngram(&corpus, 1, 4).unwrap();
        let p = m.probabilities(&[2, 1]);
        assert_eq!(p, vec![1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 0.0]);
        let tri = train_ngram(&corpus, 3, 4).unwrap();
        let q = tri.probabilities(&[3, 3]);
        for (a, b) in p.iter().zip(&q) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = train_ngram(&[0, 1, 2, 0, 1, 1, 2], 3, 3).unwrap();
        let back = NgramModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.to_json(), m.to_json());
        assert_eq!(back.probabilities(&[0, 1]), m.probabilities(&[0, 1]));
        assert!(NgramModel::from_json("{}").is_err());
        assert!(train_ngram(&[], 2, 3).is_err());
        assert!(train_ngram(&[5], 2, 3).is_err());
    }
}
