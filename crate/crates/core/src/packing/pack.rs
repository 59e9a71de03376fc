//! Packing author streams into training instances.

use std::collections::BTreeMap;

use super::instance::{next_token_mask, DocumentSpan, PackedInstance};
use super::tokenizer::{tokenize, TokenId, BOS, EOS};
use crate::corpus::{AuthorStream, CleanDocument};
use crate::error::{Error, Result};

/// Default window for author instances in HuLM pre-training.
pub const PRETRAIN_AUTHOR_MAX_LEN: usize = 8192;
/// Default window for independently processed documents.
pub const PRETRAIN_INDEPENDENT_MAX_LEN: usize = 200;
/// Default window for fine-tuning instances.
pub const FINETUNE_MAX_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PackOptions {
    pub prepend_bos: bool,
}

/// Which document(s) of a stream a task instance targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskTarget {
    Index(usize),
    /// Every document is a target (person-level packing).
    All,
}

/// Which position stands for a document's "last token".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LastTokenPolicy {
    /// Last content token, excluding the trailing separator.
    #[default]
    ContentFinal,
    /// The EOS separator after the target, when it is inside the window.
    Separator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolPositions {
    TargetLastToken,
    AuthorMean,
}

fn check_max_len(max_len: usize) -> Result<()> {
    if max_len < 2 {
        return Err(Error::Invalid(format!("max_len must be >= 2, got {max_len}")));
    }
    Ok(())
}

struct Builder {
    author_id: String,
    tokens: Vec<TokenId>,
    spans: Vec<DocumentSpan>,
}

impl Builder {
    fn new(author_id: &str, opts: PackOptions) -> Self {
        let mut tokens = Vec::new();
        if opts.prepend_bos {
            tokens.push(BOS);
        }
        Self {
            author_id: author_id.to_string(),
            tokens,
            spans: Vec::new(),
        }
    }

    fn push_doc(&mut self, doc_index: usize, content: &[TokenId], is_target: bool, with_eos: bool) {
        let start = self.tokens.len();
        self.tokens.extend_from_slice(content);
        if !content.is_empty() {
            self.spans
                .push(DocumentSpan::new(doc_index, start, start + content.len(), is_target));
        }
        if with_eos {
            self.tokens.push(EOS);
        }
    }

    fn finish(self) -> PackedInstance {
        let loss_mask = next_token_mask(&self.tokens);
        PackedInstance {
            author_id: self.author_id,
            tokens: self.tokens,
            spans: self.spans,
            loss_mask,
        }
    }
}

fn doc_tokens(doc: &CleanDocument) -> Vec<TokenId> {
    tokenize(&doc.normalized_text)
}

/// Concatenates an author's documents, each followed by EOS, and cuts the
/// result greedily into windows of at most `max_len` tokens. A document only
/// spans windows when it does not fit in one on its own; such a document
/// starts a fresh window and is cut at `max_len` boundaries, with the rest of
/// the window reused by the following documents. Empty documents are skipped.
pub fn pack_author(stream: &AuthorStream, max_len: usize) -> Result<Vec<PackedInstance>> {
    pack_author_with(stream, max_len, PackOptions::default())
}

pub fn pack_author_with(
    stream: &AuthorStream,
    max_len: usize,
    opts: PackOptions,
) -> Result<Vec<PackedInstance>> {
    check_max_len(max_len)?;
    let bos = usize::from(opts.prepend_bos);
    if bos + 1 >= max_len {
        return Err(Error::Invalid("max_len leaves no room after BOS".into()));
    }
    let mut out = Vec::new();
    let mut cur = Builder::new(&stream.author_id, opts);
    for (t, doc) in stream.documents.iter().enumerate() {
        let content = doc_tokens(doc);
        if content.is_empty() {
            continue;
        }
        let need = content.len() + 1;
        if cur.tokens.len() + need <= max_len {
            cur.push_doc(t, &content, false, true);
            continue;
        }
        if cur.tokens.len() > bos {
            out.push(std::mem::replace(&mut cur, Builder::new(&stream.author_id, opts)).finish());
        }
        if bos + need <= max_len {
            cur.push_doc(t, &content, false, true);
            continue;
        }
        // Oversized document: fill whole windows, the remainder stays open.
        let mut rest: &[TokenId] = &content;
        loop {
            let room = max_len - cur.tokens.len();
            if rest.len() + 1 <= room {
                cur.push_doc(t, rest, false, true);
                break;
            }
            let take = room.min(rest.len());
            cur.push_doc(t, &rest[..take], false, false);
            rest = &rest[take..];
            out.push(std::mem::replace(&mut cur, Builder::new(&stream.author_id, opts)).finish());
        }
    }
    if cur.tokens.len() > bos {
        out.push(cur.finish());
    }
    Ok(out)
}

/// One instance per document: content truncated to fit `max_len` together
/// with its EOS (and BOS when requested).
/// Empty documents produce no instance. Shuffling is left to the caller.
pub fn pack_independent(docs: &[CleanDocument], max_len: usize) -> Result<Vec<PackedInstance>> {
    pack_independent_with(docs, max_len, PackOptions::default())
}

pub fn pack_independent_with(
    docs: &[CleanDocument],
    max_len: usize,
    opts: PackOptions,
) -> Result<Vec<PackedInstance>> {
    check_max_len(max_len)?;
    let room = max_len - 1 - usize::from(opts.prepend_bos);
    if room == 0 {
        return Err(Error::Invalid("max_len leaves no room after BOS".into()));
    }
    Ok(docs
        .iter()
        .filter_map(|doc| {
            let mut content = doc_tokens(doc);
            if content.is_empty() {
                return None;
            }
            content.truncate(room);
            let mut b = Builder::new(&doc.author_id, opts);
            b.push_doc(0, &content, false, true);
            Some(b.finish())
        })
        .collect())
}

/// Builds a fine-tuning / probing instance.
///
/// With history, documents preceding the target are packed before it; when
/// the window is too small the oldest history documents are dropped whole and
/// then the oldest survivor loses its head. The target is never truncated.
/// Without history the instance holds the target alone. `TaskTarget::All`
/// marks every packed document as a target (newest documents kept first) and
/// requires `include_history`.
pub fn pack_for_task(
    stream: &AuthorStream,
    target: TaskTarget,
    max_len: usize,
    include_history: bool,
) -> Result<PackedInstance> {
    check_max_len(max_len)?;
    let n = stream.documents.len();
    if n == 0 {
        return Err(Error::Empty("author stream"));
    }
    let (last, all_targets) = match target {
        TaskTarget::Index(t) if t < n => (t, false),
        TaskTarget::Index(t) => {
            return Err(Error::Invalid(format!("target index {t} out of range for {n} documents")))
        }
        TaskTarget::All if include_history => (n - 1, true),
        TaskTarget::All => {
            return Err(Error::Invalid(
                "person-level packing of all documents requires history".into(),
            ))
        }
    };
    let target_tokens = doc_tokens(&stream.documents[last]);
    let needed = target_tokens.len() + 1;
    if needed > max_len {
        return Err(Error::TargetExceedsWindow { needed, max_len });
    }
    let mut budget = max_len - needed;
    // Collected newest-first, reversed at the end.
    let mut kept: Vec<(usize, Vec<TokenId>)> = Vec::new();
    if include_history {
        for t in (0..last).rev() {
            if budget < 2 {
                break;
            }
            let mut toks = doc_tokens(&stream.documents[t]);
            if toks.is_empty() {
                continue;
            }
            if toks.len() + 1 > budget {
                let keep = budget - 1;
                toks.drain(..toks.len() - keep);
            }
            budget -= toks.len() + 1;
            kept.push((t, toks));
        }
    }
    let mut b = Builder::new(&stream.author_id, PackOptions::default());
    for (t, toks) in kept.iter().rev() {
        b.push_doc(*t, toks, all_targets, true);
    }
    b.push_doc(last, &target_tokens, true, true);
    Ok(b.finish())
}

/// Positions whose last-layer states are pooled for a task.
pub fn locate_pool_positions(instance: &PackedInstance, mode: PoolPositions) -> Result<Vec<usize>> {
    locate_pool_positions_with(instance, mode, LastTokenPolicy::default())
}

pub fn locate_pool_positions_with(
    instance: &PackedInstance,
    mode: PoolPositions,
    policy: LastTokenPolicy,
) -> Result<Vec<usize>> {
    match mode {
        PoolPositions::TargetLastToken => {
            let mut targets = instance.target_spans();
            let span = targets.next().ok_or(Error::NoTargetSpan)?;
            if targets.next().is_some() {
                return Err(Error::Invalid("more than one target span".into()));
            }
            let end = span.end as usize;
            let pos = match policy {
                LastTokenPolicy::Separator if end < instance.len() => end,
                _ => end - 1,
            };
            Ok(vec![pos])
        }
        PoolPositions::AuthorMean => {
            let pos: Vec<usize> = instance.content_positions().collect();
            if pos.is_empty() {
                return Err(Error::Empty("instance has no content positions"));
            }
            Ok(pos)
        }
    }
}

/// Reassembles document contents from spans, merging pieces of split
/// documents by `doc_index`, in document order.
pub fn unpack_documents(instances: &[PackedInstance]) -> Vec<Vec<TokenId>> {
    let mut docs: BTreeMap<u32, Vec<TokenId>> = BTreeMap::new();
    for inst in instances {
        for s in &inst.spans {
            docs.entry(s.doc_index)
                .or_default()
                .extend_from_slice(&inst.tokens[s.range()]);
        }
    }
    docs.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AuthorStream;
    use crate::packing::detokenize;

    /// Stream whose documents tokenize to exactly the given byte values.
    fn stream_of(docs: &[&[u8]]) -> AuthorStream {
        let texts: Vec<String> = docs
            .iter()
            .map(|d| String::from_utf8(d.to_vec()).unwrap())
            .collect();
        AuthorStream::from_texts("a", &texts)
    }

    #[test]
    fn concatenation_with_separators() {
        let s = stream_of(&[&[5, 6], &[7]]);
        let out = pack_author(&s, 16).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].tokens, vec![5, 6, EOS, 7, EOS]);
        let spans: Vec<_> = out[0].spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, [(0, 2), (3, 4)]);
        assert_eq!(out[0].loss_mask, vec![true, true, true, true, false]);
        out[0].validate().unwrap();
    }

    #[test]
    fn no_mid_document_split() {
        let s = stream_of(&[&[5, 6], &[7]]);
        let out = pack_author(&s, 4).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].tokens, vec![5, 6, EOS]);
        assert_eq!(out[1].tokens, vec![7, EOS]);
        assert_eq!(out[1].spans[0].doc_index, 1);
    }

    #[test]
    fn oversized_document_is_split() {
        let s = stream_of(&[&[1, 2, 3, 4, 5, 6, 7], &[8]]);
        let out = pack_author(&s, 3).unwrap();
        let toks: Vec<_> = out.iter().map(|i| i.tokens.clone()).collect();
        assert_eq!(toks, vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, EOS], vec![8, EOS]]);
        for i in &out {
            i.validate().unwrap();
            assert!(i.len() <= 3);
        }
        assert_eq!(unpack_documents(&out), vec![vec![1, 2, 3, 4, 5, 6, 7], vec![8]]);
    }

    #[test]
    fn doc_exactly_max_len() {
        let s = stream_of(&[&[1, 2, 3], &[4]]);
        let out = pack_author(&s, 3).unwrap();
        let toks: Vec<_> = out.iter().map(|i| i.tokens.clone()).collect();
        assert_eq!(toks, vec![vec![1, 2, 3], vec![EOS, 4, EOS]]);
        for i in &out {
            i.validate().unwrap();
        }
    }

    #[test]
    fn empty_stream_packs_to_nothing() {
        let s = AuthorStream { author_id: "a".into(), documents: vec![] };
        assert!(pack_author(&s, 8).unwrap().is_empty());
        assert!(pack_author(&s, 1).is_err());
    }

    #[test]
    fn bos_option() {
        let s = stream_of(&[&[5, 6], &[7]]);
        let out = pack_author_with(&s, 16, PackOptions { prepend_bos: true }).unwrap();
        assert_eq!(out[0].tokens, vec![BOS, 5, 6, EOS, 7, EOS]);
        out[0].validate().unwrap();
    }

    #[test]
    fn independent_packing() {
        let s = stream_of(&[&[1, 2, 3]]);
        let out = pack_independent(&s.documents, 200).unwrap();
        assert_eq!(out[0].tokens, vec![1, 2, 3, EOS]);
        let long = "x".repeat(300);
        let s = AuthorStream::from_texts("a", &[long]);
        let out = pack_independent(&s.documents, 200).unwrap();
        assert_eq!(out[0].len(), 200);
        assert_eq!(out[0].tokens[199], EOS);
        assert!(pack_independent(&[], 200).unwrap().is_empty());
    }

    #[test]
    fn task_with_history() {
        let s = AuthorStream::from_texts("a", &["d1", "d2", "d3"]);
        let inst = pack_for_task(&s, TaskTarget::Index(2), 64, true).unwrap();
        let idx: Vec<_> = inst.spans.iter().map(|s| (s.doc_index, s.is_target)).collect();
        assert_eq!(idx, [(0, false), (1, false), (2, true)]);
        inst.validate().unwrap();
    }

    #[test]
    fn task_without_history() {
        let s = AuthorStream::from_texts("a", &["d1", "d2", "d3"]);
        let inst = pack_for_task(&s, TaskTarget::Index(2), 64, false).unwrap();
        assert_eq!(inst.spans.len(), 1);
        assert!(inst.spans[0].is_target);
        assert_eq!(detokenize(&inst.tokens), "d3");
    }

    #[test]
    fn task_drops_oldest_then_truncates_head() {
        let s = AuthorStream::from_texts("a", &["aaaa", "bbbb", "cc"]);
        // target "cc"+EOS = 3, "bbbb"+EOS = 5 -> 8; "aaaa" does not fit.
        let inst = pack_for_task(&s, TaskTarget::Index(2), 8, true).unwrap();
        let idx: Vec<_> = inst.spans.iter().map(|s| s.doc_index).collect();
        assert_eq!(idx, [1, 2]);
        assert_eq!(detokenize(&inst.tokens[inst.spans[1].range()]), "cc");
        // two spare slots keep the tail "a" of the oldest document plus its EOS
        let inst = pack_for_task(&s, TaskTarget::Index(2), 10, true).unwrap();
        assert_eq!(inst.spans.len(), 3);
        assert_eq!(detokenize(&inst.tokens[inst.spans[0].range()]), "a");
        assert_eq!(inst.len(), 10);
        inst.validate().unwrap();
    }

    #[test]
    fn target_exceeds_window() {
        let s = AuthorStream::from_texts("a", &["abcdef"]);
        assert!(matches!(
            pack_for_task(&s, TaskTarget::Index(0), 6, true),
            Err(Error::TargetExceedsWindow { needed: 7, max_len: 6 })
        ));
    }

    #[test]
    fn all_targets() {
        let s = AuthorStream::from_texts("a", &["x", "yy", "z"]);
        let inst = pack_for_task(&s, TaskTarget::All, 64, true).unwrap();
        assert!(inst.spans.iter().all(|s| s.is_target));
        assert_eq!(inst.spans.len(), 3);
        assert!(pack_for_task(&s, TaskTarget::All, 64, false).is_err());
    }

    #[test]
    fn pool_positions() {
        let s = stream_of(&[&[5, 6], &[7]]);
        let mut inst = pack_author(&s, 16).unwrap().remove(0);
        inst.spans[1].is_target = true;
        assert_eq!(locate_pool_positions(&inst, PoolPositions::TargetLastToken).unwrap(), vec![3]);
        assert_eq!(
            locate_pool_positions_with(&inst, PoolPositions::TargetLastToken, LastTokenPolicy::Separator)
                .unwrap(),
            vec![4]
        );
        assert_eq!(locate_pool_positions(&inst, PoolPositions::AuthorMean).unwrap(), vec![0, 1, 3]);
        inst.spans[1].is_target = false;
        assert!(matches!(
            locate_pool_positions(&inst, PoolPositions::TargetLastToken),
            Err(Error::NoTargetSpan)
        ));
    }

    #[test]
    fn single_doc_last_token() {
        let s = AuthorStream::from_texts("a", &["hey"]);
        let inst = pack_for_task(&s, TaskTarget::Index(0), 16, false).unwrap();
        assert_eq!(locate_pool_positions(&inst, PoolPositions::TargetLastToken).unwrap(), vec![2]);
    }
}
