use std::collections::HashMap;

use super::document::{AuthorStream, CleanDocument};

/// One stream per author in order of first appearance. Documents are sorted
/// by `created_at` (stable) when every document of the author has one, and
/// otherwise keep ingest order.
pub fn group_by_author(docs: Vec<CleanDocument>) -> Vec<AuthorStream> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut streams: Vec<AuthorStream> = Vec::new();
    for doc in docs {
        let slot = *index.entry(doc.author_id.clone()).or_insert_with(|| {
            streams.push(AuthorStream {
                author_id: doc.author_id.clone(),
                documents: Vec::new(),
            });
            streams.len() - 1
        });
        streams[slot].documents.push(doc);
    }
    for s in &mut streams {
        if s.documents.iter().all(|d| d.created_at.is_some()) {
            s.documents.sort_by_key(|d| d.created_at);
        }
    }
    streams
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::document::RawDocument;
    use crate::corpus::normalize::normalize_text;

    fn doc(a: &str, t: &str, ts: Option<i64>) -> CleanDocument {
        let mut r = RawDocument::new(a, t);
        r.created_at = ts;
        normalize_text(r)
    }

    #[test]
    fn sorts_when_all_timestamps_present() {
        let s = group_by_author(vec![doc("a1", "late", Some(5)), doc("a1", "early", Some(2))]);
        assert_eq!(s.len(), 1);
        let texts: Vec<_> = s[0].documents.iter().map(|d| d.text.as_str()).collect();
        assert_eq!(texts, ["early", "late"]);
    }

    #[test]
    fn keeps_ingest_order_when_a_timestamp_is_missing() {
        let s = group_by_author(vec![
            doc("a1", "x", Some(5)),
            doc("a1", "y", None),
            doc("a1", "z", Some(1)),
        ]);
        let texts: Vec<_> = s[0].documents.iter().map(|d| d.text.as_str()).collect();
        assert_eq!(texts, ["x", "y", "z"]);
    }

    #[test]
    fn first_appearance_order_and_stable_ties() {
        let s = group_by_author(vec![
            doc("a2", "p", Some(1)),
            doc("a1", "q", Some(3)),
            doc("a2", "r", Some(1)),
            doc("a1", "s", Some(2)),
        ]);
        assert_eq!(s[0].author_id, "a2");
        assert_eq!(s[1].author_id, "a1");
        let a2: Vec<_> = s[0].documents.iter().map(|d| d.text.as_str()).collect();
        assert_eq!(a2, ["p", "r"]);
        let a1: Vec<_> = s[1].documents.iter().map(|d| d.text.as_str()).collect();
        assert_eq!(a1, ["s", "q"]);
    }
}
