use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::document::AuthorStream;

/// Source tag used for documents that carry none.
pub const UNSPECIFIED_SOURCE: &str = "unspecified";

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub users: u64,
    pub docs: u64,
    pub tokens: u64,
    pub utf8_bytes: u64,
}

/// Per-source and total counts with the columns of a corpus statistics table.
///
/// Token counts use the byte-level tokenizer, so `tokens == utf8_bytes` for
/// content; the columns are kept separate so the schema does not depend on
/// the tokenizer.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sources: BTreeMap<String, SourceStats>,
    pub total: SourceStats,
}

pub fn corpus_stats(streams: &[AuthorStream]) -> CorpusStats {
    let mut sources: BTreeMap<String, SourceStats> = BTreeMap::new();
    let mut users: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for stream in streams {
        for doc in &stream.documents {
            let tag = doc.source.as_deref().unwrap_or(UNSPECIFIED_SOURCE).to_string();
            let bytes = doc.normalized_text.len() as u64;
            let entry = sources.entry(tag.clone()).or_default();
            entry.docs += 1;
            entry.utf8_bytes += bytes;
            entry.tokens += crate::packing::tokenize(&doc.normalized_text).len() as u64;
            users.entry(tag).or_default().insert(stream.author_id.as_str());
        }
    }
    for (tag, set) in users {
        if let Some(s) = sources.get_mut(&tag) {
            s.users = set.len() as u64;
        }
    }
    let mut total = SourceStats {
        users: streams.iter().filter(|s| !s.is_empty()).count() as u64,
        ..SourceStats::default()
    };
    for s in sources.values() {
        total.docs += s.docs;
        total.tokens += s.tokens;
        total.utf8_bytes += s.utf8_bytes;
    }
    CorpusStats { sources, total }
}
