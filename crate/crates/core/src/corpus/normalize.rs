use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use super::document::{CleanDocument, RawDocument};
use super::filters::dedupe_key;

pub const URL_TOKEN: &str = "<URL>";

static URL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b[a-z][a-z0-9+.\-]*://\S+|\bwww\.\S+").expect("url pattern")
});
static NEWLINE_RUN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\n{3,}").expect("newline pattern"));

/// NFC composition, control characters other than newline removed, URLs
/// replaced by `<URL>`, newline runs longer than two collapsed to two.
pub fn normalize_str(text: &str) -> String {
    let composed: String = text
        .nfc()
        .filter(|&c| c == '\n' || !c.is_control())
        .collect();
    let no_urls = URL_RE.replace_all(&composed, URL_TOKEN);
    NEWLINE_RUN_RE.replace_all(&no_urls, "\n\n").into_owned()
}

pub fn normalize_text(doc: RawDocument) -> CleanDocument {
    let normalized_text = normalize_str(&doc.text);
    CleanDocument {
        dedupe_key: dedupe_key(&doc.text),
        author_id: doc.author_id,
        text: doc.text,
        created_at: doc.created_at,
        source: doc.source,
        label: doc.label,
        normalized_text,
    }
}
