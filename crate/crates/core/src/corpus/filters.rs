//! Document-level filters: missing data, exact deduplication, an English
//! heuristic and a lexicon-based toxicity rule.

use std::collections::HashSet;
use std::hash::Hasher;

use fnv::FnvHasher;

use super::document::{CleanDocument, RawDocument};
use crate::error::{Error, Result};

/// Removes documents with an empty author id or whitespace-only text.
pub fn drop_missing(docs: Vec<RawDocument>) -> Vec<RawDocument> {
    docs.into_iter()
        .filter(|d| !d.author_id.trim().is_empty() && !d.text.trim().is_empty())
        .collect()
}

/// Lowercase and collapse every whitespace run to one space.
pub fn dedupe_form(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// 64-bit FNV-1a over [`dedupe_form`].
pub fn dedupe_key(text: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(dedupe_form(text).as_bytes());
    h.finish()
}

/// Keeps the first document for every dedupe key, across all authors.
pub fn dedupe(docs: Vec<RawDocument>) -> Vec<RawDocument> {
    let mut seen = HashSet::with_capacity(docs.len());
    docs.into_iter()
        .filter(|d| seen.insert(dedupe_key(&d.text)))
        .collect()
}

pub const DEFAULT_ASCII_THRESHOLD: f64 = 0.9;
pub const DEFAULT_STOPWORD_THRESHOLD: f64 = 0.15;
/// Documents shorter than this many tokens are judged on the ASCII test alone.
pub const STOPWORD_MIN_TOKENS: usize = 5;

pub const STOPWORDS: [&str; 50] = [
    "the", "be", "to", "of", "and", "a", "in", "that", "have", "i", "it", "for", "not", "on",
    "with", "he", "as", "you", "do", "at", "this", "but", "his", "by", "from", "they", "we",
    "say", "her", "she", "or", "an", "will", "my", "one", "all", "would", "there", "their",
    "what", "so", "up", "out", "if", "about", "who", "is", "was", "because", "are",
];

pub fn ascii_fraction(text: &str) -> f64 {
    let (mut total, mut ascii) = (0usize, 0usize);
    for c in text.chars() {
        total += 1;
        if c.is_ascii_graphic() || c == ' ' || c == '\n' {
            ascii += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        ascii as f64 / total as f64
    }
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| c.is_ascii_punctuation())
}

/// Fraction of whitespace-delimited tokens that are stopwords, and the token count.
pub fn stopword_fraction(text: &str) -> (f64, usize) {
    let mut n = 0usize;
    let mut hits = 0usize;
    for tok in text.split_whitespace() {
        n += 1;
        let t = strip_punct(tok).to_lowercase();
        if STOPWORDS.contains(&t.as_str()) {
            hits += 1;
        }
    }
    if n == 0 {
        (0.0, 0)
    } else {
        (hits as f64 / n as f64, n)
    }
}

pub fn is_english(text: &str, ascii_threshold: f64, stopword_threshold: f64) -> bool {
    if ascii_fraction(text) < ascii_threshold {
        return false;
    }
    let (frac, n) = stopword_fraction(text);
    n < STOPWORD_MIN_TOKENS || frac >= stopword_threshold
}

pub fn filter_english(
    docs: Vec<RawDocument>,
    ascii_threshold: f64,
    stopword_threshold: f64,
) -> Result<Vec<RawDocument>> {
    for (name, v) in [("ascii_threshold", ascii_threshold), ("stopword_threshold", stopword_threshold)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Invalid(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(docs
        .into_iter()
        .filter(|d| is_english(&d.text, ascii_threshold, stopword_threshold))
        .collect())
}

/// Non-empty, lowercased word set for the toxicity rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon(HashSet<String>);

impl Lexicon {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if set.is_empty() {
            return Err(Error::Empty("toxicity lexicon"));
        }
        Ok(Self(set))
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Case-insensitive whole-word matches in `text`.
    pub fn hits(&self, text: &str) -> usize {
        text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
            .filter(|w| !w.is_empty())
            .filter(|w| self.0.contains(&w.to_lowercase()))
            .count()
    }
}

/// Drops a document when its lexicon hit count exceeds `max_hits`.
pub fn filter_toxic(docs: Vec<CleanDocument>, lexicon: &Lexicon, max_hits: usize) -> Vec<CleanDocument> {
    docs.into_iter()
        .filter(|d| lexicon.hits(&d.normalized_text) <= max_hits)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::normalize::normalize_text;

    fn raw(a: &str, t: &str) -> RawDocument {
        RawDocument::new(a, t)
    }

    #[test]
    fn drop_missing_rules() {
        let out = drop_missing(vec![raw("a1", "hi"), raw("a2", "  ")]);
        assert_eq!(out, vec![raw("a1", "hi")]);
        let ok = vec![raw("a", "x"), raw("b", "y")];
        assert_eq!(drop_missing(ok.clone()), ok);
        assert!(drop_missing(vec![raw("", "hi")]).is_empty());
    }

    #[test]
    fn dedupe_normalizes_case_and_whitespace() {
        let out = dedupe(vec![raw("a", "Hello  world"), raw("b", "hello world")]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].author_id, "a");
        let distinct = vec![raw("a", "one"), raw("a", "two")];
        assert_eq!(dedupe(distinct.clone()), distinct);
    }

    #[test]
    fn english_examples() {
        let t = "the cat sat on the mat because it was tired";
        assert!(is_english(t, 0.9, 0.15));
        assert!(!is_english("Съешь же ещё этих мягких французских булок", 0.9, 0.15));
        assert!(is_english("quantum chromodynamics lattice", 0.9, 0.15));
        assert!(!is_english("quantum chromodynamics lattice gauge theory results", 0.9, 0.15));
    }

    #[test]
    fn english_thresholds_validated() {
        assert!(filter_english(vec![], 1.5, 0.1).is_err());
        assert!(filter_english(vec![], 0.5, -0.1).is_err());
    }

    fn clean(t: &str) -> CleanDocument {
        normalize_text(raw("a", t))
    }

    #[test]
    fn toxic_whole_word() {
        let lex = Lexicon::new(["slur"]).unwrap();
        assert!(filter_toxic(vec![clean("a slur here")], &lex, 0).is_empty());
        assert_eq!(filter_toxic(vec![clean("all clean")], &lex, 0).len(), 1);
        assert_eq!(filter_toxic(vec![clean("slurry")], &lex, 0).len(), 1);
        assert_eq!(filter_toxic(vec![clean("SLUR, slur")], &lex, 1).len(), 0);
        assert_eq!(filter_toxic(vec![clean("SLUR, slur")], &lex, 2).len(), 1);
    }

    #[test]
    fn empty_lexicon_rejected() {
        assert!(Lexicon::new(Vec::<String>::new()).is_err());
        assert!(Lexicon::new(["  "]).is_err());
    }
}
