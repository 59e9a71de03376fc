//! JSON Lines ingest.
//!
//! One object per line: `user_id` and `text` are required strings;
//! `created_at` (ISO-8601 string or integer epoch seconds), `source` and
//! `label` (string or number) are optional. Malformed lines are skipped and
//! reported by 1-based line number.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Deserialize;
use serde_json::Value;

use super::document::{Label, RawDocument};
use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct IngestReport {
    pub documents: Vec<RawDocument>,
    /// 1-based line numbers of rejected lines.
    pub rejected_lines: Vec<usize>,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.rejected_lines.len()
    }
}

#[derive(Deserialize)]
struct Record {
    user_id: String,
    text: String,
    #[serde(default)]
    created_at: Option<Value>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    label: Option<Label>,
}

pub fn ingest(path: impl AsRef<Path>) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Some(doc) => report.documents.push(doc),
            None => report.rejected_lines.push(idx + 1),
        }
    }
    Ok(report)
}

fn parse_line(line: &str) -> Option<RawDocument> {
    let rec: Record = serde_json::from_str(line).ok()?;
    if rec.user_id.trim().is_empty() {
        return None;
    }
    let created_at = match rec.created_at {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_timestamp(&v)?),
    };
    Some(RawDocument {
        author_id: rec.user_id,
        text: rec.text,
        created_at,
        source: rec.source,
        label: rec.label,
    })
}

/// Integer epoch seconds, or an ISO-8601 date / datetime string.
pub fn parse_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => parse_iso8601(s),
        _ => None,
    }
}

fn parse_iso8601(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}
