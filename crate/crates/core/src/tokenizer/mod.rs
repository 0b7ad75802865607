//! Byte-level byte-pair-encoding tokenizer with atomic special tokens.
//!
//! Text is first cut at special-token occurrences, the remaining spans are
//! pre-tokenized ([`pretok`]) and every piece is encoded by repeatedly merging
//! the adjacent symbol pair with the lowest merge rank.
//!
//! A tokenizer can be loaded from a merges file plus a vocabulary file (either
//! the line-per-token layout written by [`Tokenizer::save`] or a JSON
//! `token -> id` map), or trained on a corpus with [`train_bpe`].

pub mod bytes;
pub mod pretok;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use aho_corasick::{AhoCorasick, MatchKind};
use thiserror::Error;

pub use train::train_bpe;

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("unknown token id {0}")]
    UnknownTokenId(TokenId),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary size {target} must exceed {minimum} (byte alphabet plus special tokens)")]
    VocabTooSmall { target: usize, minimum: usize },
    #[error("{path}:{line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Token strings (in byte-mapped form, see [`bytes`]) and their ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    special_tokens: BTreeSet<String>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.token(id).is_some_and(|t| self.special_tokens.contains(t))
    }

    pub fn special_tokens(&self) -> impl Iterator<Item = &str> {
        self.special_tokens.iter().map(String::as_str)
    }

    /// Append a token, returning its id (the existing id if already present).
    fn push(&mut self, token: String) -> TokenId {
        if let Some(id) = self.token_to_id.get(&token) {
            return *id;
        }
        let id = self.id_to_token.len() as TokenId;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        id
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        let mut v = Vocab::default();
        for (i, t) in tokens.into_iter().enumerate() {
            if v.push(t.clone()) as usize != i {
                return Err(format!("duplicate token `{t}`"));
            }
        }
        Ok(v)
    }
}

/// Ordered merge rules; rank is the position in the list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeTable {
    pub merges: Vec<(String, String)>,
}

impl MergeTable {
    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocab,
    merges: MergeTable,
    ranks: HashMap<(String, String), usize>,
    specials: Option<AhoCorasick>,
    special_ids: Vec<TokenId>,
}

impl Tokenizer {
    /// Build from a vocabulary and merges. Special tokens missing from the
    /// vocabulary are appended after the existing ids.
    pub fn new(mut vocab: Vocab, merges: MergeTable, specials: &[&str]) -> Self {
        let mut special_ids = Vec::new();
        for s in specials {
            special_ids.push(vocab.push(s.to_string()));
            vocab.special_tokens.insert(s.to_string());
        }
        let ranks = merges
            .merges
            .iter()
            .enumerate()
            .map(|(i, pair)| (pair.clone(), i))
            .collect();
        let specials = (!specials.is_empty()).then(|| {
            AhoCorasick::builder()
                .match_kind(MatchKind::LeftmostLongest)
                .build(specials)
                .expect("special token patterns are valid")
        });
        Tokenizer {
            vocab,
            merges,
            ranks,
            specials,
            special_ids,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Id of a special token registered with this tokenizer.
    pub fn special_id(&self, token: &str) -> Option<TokenId> {
        self.vocab.special_tokens.contains(token).then(|| self.vocab.id(token)).flatten()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, text: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut last = 0;
        if let Some(ac) = &self.specials {
            for m in ac.find_iter(text) {
                self.encode_ordinary(&text[last..m.start()], &mut out);
                out.push(self.special_ids[m.pattern().as_usize()]);
                last = m.end();
            }
        }
        self.encode_ordinary(&text[last..], &mut out);
        out
    }

    fn encode_ordinary(&self, text: &[u8], out: &mut Vec<TokenId>) {
        for range in pretok::pretokenize(text) {
            self.encode_piece(&text[range], out);
        }
    }

    fn encode_piece(&self, piece: &[u8], out: &mut Vec<TokenId>) {
        let mut symbols: Vec<String> = piece.iter().map(|b| bytes::byte_to_char(*b).to_string()).collect();
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|r| (*r, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        for s in symbols {
            match self.vocab.id(&s) {
                Some(id) => out.push(id),
                // Inconsistent files: fall back to the byte symbols.
                None => out.extend(s.chars().filter_map(|c| self.vocab.id(&c.to_string()))),
            }
        }
    }

    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for &id in ids {
            let token = self.vocab.token(id).ok_or(TokenizerError::UnknownTokenId(id))?;
            if self.vocab.special_tokens.contains(token) {
                out.extend_from_slice(token.as_bytes());
            } else {
                out.extend(bytes::token_to_bytes(token).ok_or(TokenizerError::UnknownTokenId(id))?);
            }
        }
        Ok(out)
    }

    /// Decode to text; byte sequences that are not valid UTF-8 (a prediction
    /// cut inside a multi-byte character) are replaced lossily.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    /// Subword strings of `ids`, as raw text.
    pub fn token_strings(&self, ids: &[TokenId]) -> Result<Vec<String>, TokenizerError> {
        ids.iter().map(|id| self.decode(&[*id])).collect()
    }

    /// Load `merges.txt` plus `vocab.txt` or `vocab.json` from a directory.
    pub fn load_dir(dir: &Path, specials: &[&str]) -> Result<Self, TokenizerError> {
        let vocab_txt = dir.join("vocab.txt");
        let vocab_path = if vocab_txt.exists() {
            vocab_txt
        } else {
            dir.join("vocab.json")
        };
        Self::from_files(&vocab_path, &dir.join("merges.txt"), specials)
    }

    pub fn from_files(vocab_path: &Path, merges_path: &Path, specials: &[&str]) -> Result<Self, TokenizerError> {
        let vocab_text = read(vocab_path)?;
        let merges_text = read(merges_path)?;
        let vocab = if vocab_path.extension().is_some_and(|e| e == "json") {
            parse_vocab_json(&vocab_text, vocab_path)?
        } else {
            parse_vocab_lines(&vocab_text, vocab_path)?
        };
        let merges = parse_merges(&merges_text, merges_path)?;
        Ok(Tokenizer::new(vocab, merges, specials))
    }

    /// Contents of `vocab.txt` (one token per line, id = line number) and
    /// `merges.txt` (`left right` per line, rank = line number after the
    /// version header).
    pub fn to_file_texts(&self) -> (String, String) {
        let mut vocab = String::new();
        for t in &self.vocab.id_to_token {
            vocab.push_str(t);
            vocab.push('\n');
        }
        let mut merges = String::from("#version: 0.2\n");
        for (l, r) in &self.merges.merges {
            merges.push_str(l);
            merges.push(' ');
            merges.push_str(r);
            merges.push('\n');
        }
        (vocab, merges)
    }

    /// Write `vocab.txt` and `merges.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), TokenizerError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let (vocab, merges) = self.to_file_texts();
        crate::fsutil::write_atomic(&dir.join("vocab.txt"), vocab.as_bytes()).map_err(|e| io_err(dir, e))?;
        crate::fsutil::write_atomic(&dir.join("merges.txt"), merges.as_bytes()).map_err(|e| io_err(dir, e))?;
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TokenizerError {
    TokenizerError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read(path: &Path) -> Result<String, TokenizerError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn format_err(path: &Path, line: usize, reason: impl Into<String>) -> TokenizerError {
    TokenizerError::Format {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn parse_vocab_lines(text: &str, path: &Path) -> Result<Vocab, TokenizerError> {
    let tokens: Vec<String> = crate::script::split_lines(text).map(String::from).collect();
    Vocab::from_tokens(tokens).map_err(|r| format_err(path, 0, r))
}

fn parse_vocab_json(text: &str, path: &Path) -> Result<Vocab, TokenizerError> {
    let map: HashMap<String, TokenId> = serde_json::from_str(text).map_err(|e| format_err(path, e.line(), e.to_string()))?;
    let mut tokens = vec![None; map.len()];
    for (tok, id) in map {
        let slot = tokens
            .get_mut(id as usize)
            .ok_or_else(|| format_err(path, 0, format!("id {id} out of range")))?;
        if slot.replace(tok).is_some() {
            return Err(format_err(path, 0, format!("id {id} assigned twice")));
        }
    }
    let tokens = tokens.into_iter().map(|t| t.expect("ids are dense")).collect();
    Vocab::from_tokens(tokens).map_err(|r| format_err(path, 0, r))
}

fn parse_merges(text: &str, path: &Path) -> Result<MergeTable, TokenizerError> {
    let mut merges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with("#version") || line.is_empty() {
            continue;
        }
        let (l, r) = line
            .split_once(' ')
            .ok_or_else(|| format_err(path, i + 1, "expected `left right`"))?;
        let pair = (l.to_string(), r.to_string());
        if !seen.insert(pair.clone()) {
            return Err(format_err(path, i + 1, "duplicate merge"));
        }
        merges.push(pair);
    }
    Ok(MergeTable { merges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::SPECIAL_TOKENS;

    fn tiny() -> Tokenizer {
        let corpus = "x = 1\nx = 2\n<|cell|>\n# plot the data <|endofcomment|>\nplt.plot(x)\n";
        train_bpe(corpus.as_bytes(), 256 + SPECIAL_TOKENS.len() + 20, &SPECIAL_TOKENS).unwrap()
    }

    #[test]
    fn empty_and_special_only() {
        let t = tiny();
        assert!(t.encode("").is_empty());
        let cell = t.encode("<|cell|>");
        assert_eq!(cell, vec![t.special_id("<|cell|>").unwrap()]);
        let eoc = t.special_id("<|endofcomment|>").unwrap();
        assert_eq!(t.decode(&[eoc]).unwrap(), "<|endofcomment|>");
        assert_eq!(t.decode(&[]).unwrap(), "");
    }

    #[test]
    fn round_trip_and_unknown_id() {
        let t = tiny();
        let ids = t.encode("x=1");
        assert_eq!(t.decode(&ids).unwrap(), "x=1");
        assert!(matches!(t.decode(&[999_999]), Err(TokenizerError::UnknownTokenId(999_999))));
    }

    #[test]
    fn save_and_load_preserve_encoding() {
        let t = tiny();
        let dir = tempfile::tempdir().unwrap();
        t.save(dir.path()).unwrap();
        let loaded = Tokenizer::load_dir(dir.path(), &SPECIAL_TOKENS).unwrap();
        let text = "x = 1 <|cell|>\n    plt.plot(x)";
        assert_eq!(loaded.encode(text), t.encode(text));
        assert_eq!(loaded.vocab_size(), t.vocab_size());
    }
}
