//! Packed-instance files.
//!
//! JSON Lines: one object per instance with `author_id`, `tokens`, `spans`
//! (`[doc_index, start, end, is_target]`) and `loss_mask` (0/1).
//!
//! Binary (all integers little-endian):
//!
//! ```text
//! magic "HPK1" | u32 instance count
//! per instance:
//!   u32 author-id byte length | author-id bytes
//!   u32 token count | u16 token ids
//!   u32 span count  | per span: u32 doc_index, u32 start, u32 end, u8 is_target
//!   loss mask: one u8 per token
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::instance::{DocumentSpan, PackedInstance};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HPK1";

pub fn write_jsonl(path: impl AsRef<Path>, instances: &[PackedInstance]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<PackedInstance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn encode_binary(instances: &[PackedInstance]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&(instances.len() as u32).to_le_bytes());
    for inst in instances {
        b.extend_from_slice(&(inst.author_id.len() as u32).to_le_bytes());
        b.extend_from_slice(inst.author_id.as_bytes());
        b.extend_from_slice(&(inst.tokens.len() as u32).to_le_bytes());
        for &t in &inst.tokens {
            b.extend_from_slice(&(t as u16).to_le_bytes());
        }
        b.extend_from_slice(&(inst.spans.len() as u32).to_le_bytes());
        for s in &inst.spans {
            b.extend_from_slice(&s.doc_index.to_le_bytes());
            b.extend_from_slice(&s.start.to_le_bytes());
            b.extend_from_slice(&s.end.to_le_bytes());
            b.push(s.is_target as u8);
        }
        b.extend(inst.loss_mask.iter().map(|&m| m as u8));
    }
    b
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Invalid("truncated packed binary".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_binary(buf: &[u8]) -> Result<Vec<PackedInstance>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Invalid("not a packed binary file".into()));
    }
    let n = c.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = c.u32()? as usize;
        let author_id = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| Error::Invalid("author id is not UTF-8".into()))?;
        let nt = c.u32()? as usize;
        let tokens = c
            .take(nt * 2)?
            .chunks_exact(2)
            .map(|p| u16::from_le_bytes([p[0], p[1]]) as u32)
            .collect();
        let ns = c.u32()? as usize;
        let mut spans = Vec::with_capacity(ns.min(1 << 20));
        for _ in 0..ns {
            let doc_index = c.u32()?;
            let start = c.u32()?;
            let end = c.u32()?;
            let is_target = c.take(1)?[0] != 0;
            spans.push(DocumentSpan { doc_index, start, end, is_target });
        }
        let loss_mask = c.take(nt)?.iter().map(|&m| m != 0).collect();
        out.push(PackedInstance { author_id, tokens, spans, loss_mask });
    }
    if c.pos != buf.len() {
        return Err(Error::Invalid("trailing bytes after packed instances".into()));
    }
    Ok(out)
}

pub fn write_binary(path: impl AsRef<Path>, instances: &[PackedInstance]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_binary(instances)).map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<Vec<PackedInstance>> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_binary(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AuthorStream;
    use crate::packing::pack_author;
    use proptest::prelude::*;

    #[test]
    fn json_shape() {
        let s = AuthorStream::from_texts("u", &["ab", "c"]);
        let inst = pack_author(&s, 16).unwrap();
        let j = serde_json::to_string(&inst[0]).unwrap();
        assert_eq!(
            j,
            r#"{"author_id":"u","tokens":[97,98,257,99,257],"spans":[[0,0,2,0],[1,3,4,0]],"loss_mask":[1,1,1,1,0]}"#
        );
    }

    #[test]
    fn corrupt_binary_rejected() {
        assert!(decode_binary(b"nope").is_err());
        let s = AuthorStream::from_texts("u", &["ab"]);
        let mut b = encode_binary(&pack_author(&s, 16).unwrap());
        b.pop();
        assert!(decode_binary(&b).is_err());
    }

    proptest! {
        #[test]
        fn binary_and_json_round_trip(texts in proptest::collection::vec("[a-z ]{1,12}", 0..6), max_len in 2usize..20) {
            let s = AuthorStream::from_texts("author", &texts);
            let inst = pack_author(&s, max_len).unwrap();
            prop_assert_eq!(&decode_binary(&encode_binary(&inst)).unwrap(), &inst);
            for i in &inst {
                let j = serde_json::to_string(i).unwrap();
                prop_assert_eq!(&serde_json::from_str::<PackedInstance>(&j).unwrap(), i);
            }
        }
    }
}
