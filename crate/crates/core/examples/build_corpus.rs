//! Cleans a small inline corpus and prints per-author streams and statistics.

use hulm::corpus::{corpus_stats, ingest_reader, run_pipeline, PipelineConfig};

const RAW: &str = r#"{"user_id": "ana", "text": "I think the new park is really nice, write to me at ana@example.org", "created_at": "2024-05-02T10:00:00Z", "source": "blog"}
{"user_id": "ana", "text": "We went to the market and it was busy but fun", "created_at": "2024-05-01T09:00:00Z", "source": "blog"}
{"user_id": "ben", "text": "Call me on 555-123-4567 if you want to join us for the game", "created_at": 1714550400, "source": "forum"}
{"user_id": "ben", "text": "   "}
{"user_id": "cai", "text": "I think the new park is really nice, write to me at ana@example.org"}
{"user_id": "dee", "text": "这是一个中文句子"}
{"user_id": "eve" "text": "broken line"}
"#;

fn main() -> hulm::Result<()> {
    let ingested = ingest_reader(RAW.as_bytes())?;
    println!("ingested {} documents, rejected lines {:?}", ingested.documents.len(), ingested.rejected_lines);
    let (streams, report) = run_pipeline(ingested.documents, &PipelineConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    for s in &streams {
        println!("{}:", s.author_id);
        for d in &s.documents {
            println!("  [{:?}] {}", d.created_at, d.normalized_text);
        }
    }
    println!("{}", serde_json::to_string_pretty(&corpus_stats(&streams))?);
    Ok(())
}
