//! Packs one author stream three ways and prints the resulting spans.

use hulm::corpus::AuthorStream;
use hulm::packing::{
    detokenize, locate_pool_positions, pack_author, pack_for_task, pack_independent, unpack_documents, PoolPositions,
    TaskTarget,
};

fn main() -> hulm::Result<()> {
    let stream = AuthorStream::from_texts("ana", &["good morning", "the park was busy today", "see you at noon"]);

    for inst in pack_author(&stream, 32)? {
        println!("author window: {} tokens, spans {:?}", inst.len(), inst.spans);
    }
    for inst in pack_independent(&stream.documents, 200)? {
        println!("independent: {:?}", detokenize(&inst.tokens));
    }
    let task = pack_for_task(&stream, TaskTarget::Index(2), 28, true)?;
    let kept: Vec<_> = task.spans.iter().map(|s| (s.doc_index, s.is_target)).collect();
    println!("task instance with history under a 28-token cap: docs {kept:?}");
    println!("pool at {:?}", locate_pool_positions(&task, PoolPositions::TargetLastToken)?);

    let docs = unpack_documents(&pack_author(&stream, 16)?);
    let texts: Vec<String> = docs.iter().map(|d| detokenize(d)).collect();
    println!("unpacked from 16-token windows: {texts:?}");
    Ok(())
}
