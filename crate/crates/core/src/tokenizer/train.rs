use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use aho_corasick::{AhoCorasick, MatchKind};

use super::{bytes, pretok, MergeTable, Tokenizer, TokenizerError, Vocab};

type Sym = u32;
type Pair = (Sym, Sym);
/// Heap entry: count first, then the lexicographically smaller byte pair.
type Candidate = (i64, Reverse<(Vec<u8>, Vec<u8>)>, Pair);

/// Learn a byte-level BPE vocabulary of `target_vocab_size` entries (256 byte
/// symbols, the learned merges, then `specials`).
///
/// Each step merges the most frequent adjacent pair; ties go to the
/// lexicographically smallest `(left, right)` byte strings. Training stops
/// early when no pair occurs at least twice. Special-token occurrences cut the
/// corpus, so no merge spans one.
pub fn train_bpe(corpus: &[u8], target_vocab_size: usize, specials: &[&str]) -> Result<Tokenizer, TokenizerError> {
    let minimum = 256 + specials.len();
    if target_vocab_size <= minimum {
        return Err(TokenizerError::VocabTooSmall {
            target: target_vocab_size,
            minimum,
        });
    }
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut word_counts: HashMap<&[u8], u64> = HashMap::new();
    for segment in split_on_specials(corpus, specials) {
        for r in pretok::pretokenize(segment) {
            *word_counts.entry(&segment[r]).or_default() += 1;
        }
    }
    // Sorted so symbol ids and heap pushes do not depend on hash order.
    let mut entries: Vec<(&[u8], u64)> = word_counts.into_iter().collect();
    entries.sort_unstable();

    let mut symbols: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut symbol_ids: HashMap<Vec<u8>, Sym> = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as Sym)).collect();
    let mut words: Vec<Vec<Sym>> = entries.iter().map(|(w, _)| w.iter().map(|b| *b as Sym).collect()).collect();
    let freqs: Vec<i64> = entries.iter().map(|(_, c)| *c as i64).collect();

    let mut pair_counts: HashMap<Pair, i64> = HashMap::new();
    let mut where_: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            *pair_counts.entry((p[0], p[1])).or_default() += freqs[wi];
            where_.entry((p[0], p[1])).or_default().insert(wi);
        }
    }

    let key = |symbols: &Vec<Vec<u8>>, p: Pair, c: i64| (c, Reverse((symbols[p.0 as usize].clone(), symbols[p.1 as usize].clone())), p);
    let mut heap: BinaryHeap<Candidate> =
        pair_counts.iter().map(|(p, c)| key(&symbols, *p, *c)).collect();

    let mut merges: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    let merge_budget = target_vocab_size - minimum;
    let mut distinct_new = 0usize;
    while distinct_new < merge_budget {
        let Some((count, _, pair)) = heap.pop() else { break };
        if pair_counts.get(&pair).copied().unwrap_or(0) != count {
            continue;
        }
        if count < 2 {
            break;
        }
        let mut merged_bytes = symbols[pair.0 as usize].clone();
        merged_bytes.extend_from_slice(&symbols[pair.1 as usize]);
        merges.push((symbols[pair.0 as usize].clone(), symbols[pair.1 as usize].clone()));
        let new_sym = match symbol_ids.get(&merged_bytes) {
            Some(s) => *s,
            None => {
                let s = symbols.len() as Sym;
                symbols.push(merged_bytes.clone());
                symbol_ids.insert(merged_bytes, s);
                distinct_new += 1;
                s
            }
        };

        let mut affected: Vec<usize> = where_.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<Pair> = HashSet::new();
        for wi in affected {
            let f = freqs[wi];
            let old = &words[wi];
            for p in old.windows(2) {
                let p = (p[0], p[1]);
                *pair_counts.get_mut(&p).expect("counted pair") -= f;
                touched.insert(p);
            }
            let mut rewritten = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    rewritten.push(new_sym);
                    i += 2;
                } else {
                    rewritten.push(old[i]);
                    i += 1;
                }
            }
            for p in rewritten.windows(2) {
                let p = (p[0], p[1]);
                *pair_counts.entry(p).or_default() += f;
                where_.entry(p).or_default().insert(wi);
                touched.insert(p);
            }
            words[wi] = rewritten;
        }
        pair_counts.remove(&pair);
        let mut touched: Vec<Pair> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            match pair_counts.get(&p).copied() {
                Some(c) if c > 0 => heap.push(key(&symbols, p, c)),
                _ => {
                    pair_counts.remove(&p);
                }
            }
        }
    }

    let mut vocab = Vocab::default();
    for s in &symbols {
        vocab.push(bytes::bytes_to_token(s));
    }
    let merges = MergeTable {
        merges: merges
            .into_iter()
            .map(|(l, r)| (bytes::bytes_to_token(&l), bytes::bytes_to_token(&r)))
            .collect(),
    };
    Ok(Tokenizer::new(vocab, merges, specials))
}

fn split_on_specials<'a>(corpus: &'a [u8], specials: &[&str]) -> Vec<&'a [u8]> {
    if specials.is_empty() {
        return vec![corpus];
    }
    let ac = AhoCorasick::builder()
        .match_kind(MatchKind::LeftmostLongest)
        .build(specials)
        .expect("valid patterns");
    let mut out = Vec::new();
    let mut last = 0;
    for m in ac.find_iter(corpus) {
        out.push(&corpus[last..m.start()]);
        last = m.end();
    }
    out.push(&corpus[last..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Count adjacent pairs within each pre-token by brute force.
    fn pair_frequencies(corpus: &str) -> HashMap<(u8, u8), usize> {
        let mut out = HashMap::new();
        for r in pretok::pretokenize(corpus.as_bytes()) {
            for w in corpus.as_bytes()[r].windows(2) {
                *out.entry((w[0], w[1])).or_default() += 1;
            }
        }
        out
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let t = train_bpe(b"aaaa", 257, &[]).unwrap();
        assert_eq!(t.merges().merges, vec![("a".to_string(), "a".to_string())]);
        assert_eq!(pair_frequencies("aaaa")[&(b'a', b'a')], 3);

        let corpus = "ab ab ab cd cd";
        let freq = pair_frequencies(corpus);
        let best = freq.iter().max_by_key(|(p, c)| (**c, Reverse(**p))).unwrap();
        let t = train_bpe(corpus.as_bytes(), 257, &[]).unwrap();
        let (l, r) = &t.merges().merges[0];
        assert_eq!((l.as_bytes()[0], r.as_bytes()[0]), *best.0);
    }

    #[test]
    fn ties_break_lexicographically() {
        // "ba" and "ab" each occur twice; ("a","b") sorts first.
        let t = train_bpe(b"ab\nba\nab\nba", 257, &[]).unwrap();
        assert_eq!(t.merges().merges[0], ("a".to_string(), "b".to_string()));
    }

    #[test]
    fn no_repeated_pair_means_no_merges() {
        let t = train_bpe(b"abcdefg", 300, &[]).unwrap();
        assert!(t.merges().is_empty());
        assert_eq!(t.vocab_size(), 256);
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bpe(b"", 300, &[]), Err(TokenizerError::EmptyCorpus)));
        assert!(matches!(
            train_bpe(b"abc", 257, &["<|cell|>"]),
            Err(TokenizerError::VocabTooSmall { .. })
        ));
    }

    #[test]
    fn merges_never_span_special_tokens() {
        let corpus = "xy<|cell|>yx<|cell|><|cell|>xy".repeat(10);
        let t = train_bpe(corpus.as_bytes(), 256 + 1 + 50, &["<|cell|>"]).unwrap();
        for (l, r) in &t.merges().merges {
            let merged = bytes::token_to_bytes(&format!("{l}{r}")).unwrap();
            let merged = String::from_utf8_lossy(&merged).into_owned();
            assert!(!merged.contains("<|cell|>"), "{merged}");
            assert!(!(merged.contains('x') && merged.contains('<')), "{merged}");
            assert!(!(merged.contains('>') && merged.contains('x')), "{merged}");
        }
    }
}
