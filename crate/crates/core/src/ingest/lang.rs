//! Comment language detection.

use std::collections::HashSet;
use std::sync::OnceLock;

const ENGLISH_WORDS: &str = include_str!("../../data/english_words.txt");

pub trait LanguageClassifier: Send + Sync {
    fn is_english(&self, text: &str) -> bool;
}

/// Word-list heuristic: a text is English when at least `threshold` of its
/// alphabetic words are in a bundled list of ~3,300 common English words.
/// Text without alphabetic words counts as English.
#[derive(Debug, Clone)]
pub struct WordListClassifier {
    words: HashSet<String>,
    threshold: f64,
}

impl WordListClassifier {
    pub const DEFAULT_THRESHOLD: f64 = 0.3;

    pub fn new(words: impl IntoIterator<Item = String>, threshold: f64) -> Self {
        WordListClassifier {
            words: words.into_iter().map(|w| w.to_lowercase()).collect(),
            threshold,
        }
    }

    pub fn bundled() -> &'static WordListClassifier {
        static CLASSIFIER: OnceLock<WordListClassifier> = OnceLock::new();
        CLASSIFIER.get_or_init(|| {
            WordListClassifier::new(
                ENGLISH_WORDS
                    .lines()
                    .map(str::trim)
                    .filter(|w| !w.is_empty())
                    .map(String::from),
                Self::DEFAULT_THRESHOLD,
            )
        })
    }

    /// Fraction of alphabetic words found in the list, `None` if there are none.
    pub fn known_fraction(&self, text: &str) -> Option<f64> {
        let words: Vec<String> = alphabetic_words(text).map(|w| w.to_lowercase()).collect();
        if words.is_empty() {
            return None;
        }
        let known = words.iter().filter(|w| self.words.contains(w.as_str())).count();
        Some(known as f64 / words.len() as f64)
    }
}

impl LanguageClassifier for WordListClassifier {
    fn is_english(&self, text: &str) -> bool {
        self.known_fraction(text).is_none_or(|f| f >= self.threshold)
    }
}

fn alphabetic_words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphabetic() || c == '\''))
        .map(|w| w.trim_matches('\''))
        .filter(|w| w.chars().any(char::is_alphabetic))
}
