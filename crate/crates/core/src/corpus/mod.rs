//! Author-attributed corpus construction: ingest, the six cleaning stages,
//! grouping into temporally ordered author streams, and statistics.

mod anonymize;
mod document;
mod filters;
mod ingest;
mod normalize;
mod pipeline;
mod stats;
mod stream;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

pub use anonymize::{anonymize, scrub, ScrubCounts, EMAIL_TOKEN, PHONE_TOKEN, USER_TOKEN};
pub use document::{AuthorStream, CleanDocument, Label, RawDocument};
pub use filters::{
    ascii_fraction, dedupe, dedupe_form, dedupe_key, drop_missing, filter_english, filter_toxic,
    is_english, stopword_fraction, Lexicon, DEFAULT_ASCII_THRESHOLD, DEFAULT_STOPWORD_THRESHOLD,
    STOPWORDS,
};
pub use ingest::{ingest, ingest_reader, parse_timestamp, IngestReport};
pub use normalize::{normalize_str, normalize_text, URL_TOKEN};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport};
pub use stats::{corpus_stats, CorpusStats, SourceStats, UNSPECIFIED_SOURCE};
pub use stream::group_by_author;

use crate::error::{Error, Result};

/// Writes every clean document as one JSON line, streams back to back.
pub fn write_stream_file(path: impl AsRef<Path>, streams: &[AuthorStream]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for s in streams {
        for d in &s.documents {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One JSON Lines file per author under `dir`, named by a hash of the author id.
pub fn write_author_files(dir: impl AsRef<Path>, streams: &[AuthorStream]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in streams {
        let name = format!("{:016x}.jsonl", dedupe_key(&s.author_id));
        write_stream_file(dir.join(name), std::slice::from_ref(s))?;
    }
    Ok(())
}

/// Reads a stream file written by [`write_stream_file`] and regroups it.
pub fn read_stream_file(path: impl AsRef<Path>) -> Result<Vec<AuthorStream>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: CleanDocument = serde_json::from_str(line)
            .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        docs.push(d);
    }
    Ok(group_by_author(docs))
}
