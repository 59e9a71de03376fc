//! Pattern scrubbing of e-mail addresses, phone numbers and @-mentions.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::document::CleanDocument;

pub const EMAIL_TOKEN: &str = "<EMAIL>";
pub const PHONE_TOKEN: &str = "<PHONE>";
pub const USER_TOKEN: &str = "<USER>";

static EMAIL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").expect("email")
});
// 7 to 15 digits, optionally separated by spaces, dots, dashes or parentheses.
static PHONE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\+|\(|\b)\d(?:[ .\-()]{0,2}\d){6,14}\b").expect("phone")
});
static MENTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\B@[A-Za-z0-9_]+(?:@[A-Za-z0-9_]*)*").expect("mention"));

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubCounts {
    pub emails: usize,
    pub phones: usize,
    pub mentions: usize,
}

impl ScrubCounts {
    pub fn total(&self) -> usize {
        self.emails + self.phones + self.mentions
    }
}

impl std::ops::AddAssign for ScrubCounts {
    fn add_assign(&mut self, o: Self) {
        self.emails += o.emails;
        self.phones += o.phones;
        self.mentions += o.mentions;
    }
}

fn replace_counted(re: &Regex, text: &str, token: &str, count: &mut usize) -> String {
    let n = re.find_iter(text).count();
    if n == 0 {
        return text.to_string();
    }
    *count += n;
    re.replace_all(text, token).into_owned()
}

pub fn scrub(text: &str, replace_mentions: bool) -> (String, ScrubCounts) {
    let mut counts = ScrubCounts::default();
    let t = replace_counted(&EMAIL_RE, text, EMAIL_TOKEN, &mut counts.emails);
    let t = replace_counted(&PHONE_RE, &t, PHONE_TOKEN, &mut counts.phones);
    let t = if replace_mentions {
        replace_counted(&MENTION_RE, &t, USER_TOKEN, &mut counts.mentions)
    } else {
        t
    };
    (t, counts)
}

pub fn anonymize(mut doc: CleanDocument, replace_mentions: bool) -> (CleanDocument, ScrubCounts) {
    let (text, counts) = scrub(&doc.normalized_text, replace_mentions);
    doc.normalized_text = text;
    (doc, counts)
}
