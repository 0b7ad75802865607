//! Pre-tokenization into word-like pieces, following the splitting rules of
//! the reference byte-level tokenizer:
//!
//! ```text
//! 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
//! ```
//!
//! Works on raw bytes; bytes that are not valid UTF-8 are treated as
//! punctuation-class units.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Letter,
    Number,
    Space,
    Other,
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    start: usize,
    end: usize,
    ch: Option<char>,
    class: Class,
}

fn units(bytes: &[u8]) -> Vec<Unit> {
    let mut out = Vec::with_capacity(bytes.len());
    let mut offset = 0;
    for chunk in bytes.utf8_chunks() {
        for (i, ch) in chunk.valid().char_indices() {
            let class = if ch.is_whitespace() {
                Class::Space
            } else if ch.is_numeric() {
                Class::Number
            } else if ch.is_alphabetic() {
                Class::Letter
            } else {
                Class::Other
            };
            out.push(Unit {
                start: offset + i,
                end: offset + i + ch.len_utf8(),
                ch: Some(ch),
                class,
            });
        }
        offset += chunk.valid().len();
        for _ in chunk.invalid() {
            out.push(Unit {
                start: offset,
                end: offset + 1,
                ch: None,
                class: Class::Other,
            });
            offset += 1;
        }
    }
    out
}

/// Byte ranges of the pre-tokens of `bytes`, covering it exactly.
pub fn pretokenize(bytes: &[u8]) -> Vec<std::ops::Range<usize>> {
    let u = units(bytes);
    let n = u.len();
    let ch = |i: usize| u.get(i).and_then(|x| x.ch);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let end = match_at(&u, i, &ch);
        debug_assert!(end > i);
        out.push(u[i].start..u[end - 1].end);
        i = end;
    }
    out
}

fn match_at(u: &[Unit], i: usize, ch: &impl Fn(usize) -> Option<char>) -> usize {
    let n = u.len();
    if ch(i) == Some('\'') {
        match (ch(i + 1), ch(i + 2)) {
            (Some('r'), Some('e')) | (Some('v'), Some('e')) | (Some('l'), Some('l')) => return i + 3,
            (Some('s' | 't' | 'm' | 'd'), _) => return i + 2,
            _ => {}
        }
    }
    let mut j = i;
    if ch(i) == Some(' ') && i + 1 < n && u[i + 1].class != Class::Space {
        j = i + 1;
    }
    let class = u[j].class;
    if class != Class::Space {
        let mut k = j + 1;
        while k < n && u[k].class == class {
            k += 1;
        }
        return k;
    }
    let mut k = i + 1;
    while k < n && u[k].class == Class::Space {
        k += 1;
    }
    if k == n || k - i == 1 {
        k
    } else {
        k - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pieces(s: &str) -> Vec<&str> {
        pretokenize(s.as_bytes()).into_iter().map(|r| &s[r]).collect()
    }

    #[test]
    fn code_string() {
        assert_eq!(pieces("b = np.zeros(10)"), vec!["b", " =", " np", ".", "zeros", "(", "10", ")"]);
    }

    #[test]
    fn whitespace_runs_leave_last_space_for_next_word() {
        assert_eq!(pieces("a   b"), vec!["a", "  ", " b"]);
        assert_eq!(pieces("x\n    y"), vec!["x", "\n   ", " y"]);
        assert_eq!(pieces("x  \n"), vec!["x", "  \n"]);
        assert_eq!(pieces("\ty"), vec!["\t", "y"]);
    }

    #[test]
    fn contractions_and_invalid_bytes() {
        assert_eq!(pieces("it's we'll"), vec!["it", "'s", " we", "'ll"]);
        let raw = [b'a', 0xff, 0xfe, b' ', b'1'];
        let r = pretokenize(&raw);
        assert_eq!(r, vec![0..1, 1..3, 3..5]);
    }
}
