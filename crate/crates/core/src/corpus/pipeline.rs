//! The fixed cleaning order:
//! drop_missing → dedupe → filter_english → normalize_text → filter_toxic →
//! anonymize → group_by_author.

use serde::{Deserialize, Serialize};

use super::anonymize::{anonymize, ScrubCounts};
use super::document::{AuthorStream, RawDocument};
use super::filters::{
    dedupe, drop_missing, filter_english, filter_toxic, Lexicon, DEFAULT_ASCII_THRESHOLD,
    DEFAULT_STOPWORD_THRESHOLD,
};
use super::normalize::normalize_text;
use super::stream::group_by_author;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub ascii_threshold: f64,
    pub stopword_threshold: f64,
    /// Toxicity stage is skipped when no lexicon is supplied.
    pub lexicon: Option<Lexicon>,
    pub max_toxic_hits: usize,
    pub replace_mentions: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ascii_threshold: DEFAULT_ASCII_THRESHOLD,
            stopword_threshold: DEFAULT_STOPWORD_THRESHOLD,
            lexicon: None,
            max_toxic_hits: 0,
            replace_mentions: true,
        }
    }
}

impl PipelineConfig {
    /// Settings for downstream-task ingestion: mentions are kept.
    pub fn for_task_data() -> Self {
        Self {
            replace_mentions: false,
            ..Self::default()
        }
    }
}

/// Survivor counts after each stage, plus scrub counts.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub input: usize,
    pub after_drop_missing: usize,
    pub after_dedupe: usize,
    pub after_english: usize,
    pub after_toxic: usize,
    pub authors: usize,
    pub scrubbed: ScrubCounts,
}

pub fn run_pipeline(
    docs: Vec<RawDocument>,
    config: &PipelineConfig,
) -> Result<(Vec<AuthorStream>, PipelineReport)> {
    let mut report = PipelineReport {
        input: docs.len(),
        ..Default::default()
    };
    let docs = drop_missing(docs);
    report.after_drop_missing = docs.len();
    let docs = dedupe(docs);
    report.after_dedupe = docs.len();
    let docs = filter_english(docs, config.ascii_threshold, config.stopword_threshold)?;
    report.after_english = docs.len();
    let docs: Vec<_> = docs.into_iter().map(normalize_text).collect();
    let docs = match &config.lexicon {
        Some(lex) => filter_toxic(docs, lex, config.max_toxic_hits),
        None => docs,
    };
    report.after_toxic = docs.len();
    let docs: Vec<_> = docs
        .into_iter()
        .map(|d| {
            let (d, c) = anonymize(d, config.replace_mentions);
            report.scrubbed += c;
            d
        })
        .collect();
    let streams = group_by_author(docs);
    report.authors = streams.len();
    Ok((streams, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_to_end() {
        let docs = vec![
            RawDocument::new("a", "I think that the weather is nice today, mail me at a@b.org").at(2),
            RawDocument::new("b", "   "),
            RawDocument::new("a", "It was a good day and I am happy about it").at(1),
            RawDocument::new("c", "it was a GOOD day and i am happy   about it"),
            RawDocument::new("d", "这是一个中文句子，没有任何英文。"),
        ];
        let cfg = PipelineConfig {
            lexicon: Some(Lexicon::new(["weather"]).unwrap()),
            max_toxic_hits: 1,
            ..Default::default()
        };
        let (streams, report) = run_pipeline(docs, &cfg).unwrap();
        assert_eq!(report.input, 5);
        assert_eq!(report.after_drop_missing, 4);
        assert_eq!(report.after_dedupe, 3);
        assert_eq!(report.after_english, 2);
        assert_eq!(report.after_toxic, 2);
        assert_eq!(report.scrubbed.emails, 1);
        assert_eq!(streams.len(), 1);
        assert_eq!(streams[0].documents[0].created_at, Some(1));
        assert!(streams[0].documents[1].normalized_text.ends_with("<EMAIL>"));
    }
}
