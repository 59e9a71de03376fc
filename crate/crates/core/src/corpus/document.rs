use serde::{Deserialize, Serialize};

/// A label attached to a document or author: a class name / id, or a real value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Number(f64),
    Text(String),
}

impl Label {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Label::Number(v) => Some(*v),
            Label::Text(s) => s.trim().parse().ok(),
        }
    }
}

/// One authored text as ingested, before any cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub author_id: String,
    pub text: String,
    /// Seconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl RawDocument {
    pub fn new(author_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            author_id: author_id.into(),
            text: text.into(),
            created_at: None,
            source: None,
            label: None,
        }
    }

    pub fn at(mut self, created_at: i64) -> Self {
        self.created_at = Some(created_at);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

/// A document after text normalization. `text` keeps the original content;
/// downstream stages read and rewrite `normalized_text` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub author_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub normalized_text: String,
    pub dedupe_key: u64,
}

/// Temporally ordered documents of a single author.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorStream {
    pub author_id: String,
    pub documents: Vec<CleanDocument>,
}

impl AuthorStream {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Convenience constructor for already-clean texts (tests, synthetic data).
    pub fn from_texts<S: AsRef<str>>(author_id: &str, texts: &[S]) -> Self {
        let documents = texts
            .iter()
            .map(|t| {
                let text = t.as_ref().to_string();
                CleanDocument {
                    author_id: author_id.to_string(),
                    dedupe_key: super::filters::dedupe_key(&text),
                    normalized_text: text.clone(),
                    text,
                    created_at: None,
                    source: None,
                    label: None,
                }
            })
            .collect();
        Self {
            author_id: author_id.to_string(),
            documents,
        }
    }
}
