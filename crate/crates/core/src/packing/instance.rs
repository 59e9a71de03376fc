use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::tokenizer::{is_special, TokenId, BOS, EOS, PAD};
use crate::error::{Error, Result};

/// Content tokens of document `doc_index` occupy `start..end`; the trailing
/// separator is not part of the span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocumentSpan {
    pub doc_index: u32,
    pub start: u32,
    pub end: u32,
    pub is_target: bool,
}

impl DocumentSpan {
    pub fn new(doc_index: usize, start: usize, end: usize, is_target: bool) -> Self {
        Self {
            doc_index: doc_index as u32,
            start: start as u32,
            end: end as u32,
            is_target,
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start as usize..self.end as usize
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

// JSON form: [doc_index, start, end, is_target(0/1)]
impl Serialize for DocumentSpan {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.doc_index, self.start, self.end, self.is_target as u8).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DocumentSpan {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (doc_index, start, end, t) = <(u32, u32, u32, u8)>::deserialize(d)?;
        Ok(Self {
            doc_index,
            start,
            end,
            is_target: t != 0,
        })
    }
}

mod mask01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mask: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(mask.iter().map(|&b| b as u8))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Ok(Vec::<u8>::deserialize(d)?.into_iter().map(|b| b != 0).collect())
    }
}

/// A packed token sequence of one author with document spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedInstance {
    pub author_id: String,
    pub tokens: Vec<TokenId>,
    pub spans: Vec<DocumentSpan>,
    /// `loss_mask[i]` is true when `tokens[i + 1]` exists and is a prediction target.
    #[serde(with = "mask01")]
    pub loss_mask: Vec<bool>,
}

impl PackedInstance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Next-token targets: `tokens` shifted left by one, PAD at the final position.
    pub fn targets(&self) -> Vec<TokenId> {
        let mut t: Vec<TokenId> = self.tokens.iter().skip(1).copied().collect();
        t.push(PAD);
        t
    }

    pub fn target_spans(&self) -> impl Iterator<Item = &DocumentSpan> {
        self.spans.iter().filter(|s| s.is_target)
    }

    pub fn content_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans.iter().flat_map(|s| s.range())
    }

    /// Checks the structural invariants: ascending non-overlapping spans with
    /// strictly increasing document index, every span followed by EOS when in
    /// bounds, each gap between spans exactly one separator, and spans plus
    /// specials partitioning the token list.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("instance {}: {m}", self.author_id)));
        if self.loss_mask.len() != self.tokens.len() {
            return bad("loss_mask length differs from tokens".into());
        }
        let n = self.tokens.len();
        let mut covered = vec![false; n];
        let mut prev: Option<&DocumentSpan> = None;
        for s in &self.spans {
            if s.start >= s.end || s.end as usize > n {
                return bad(format!("bad span {s:?}"));
            }
            if let Some(p) = prev {
                if s.doc_index <= p.doc_index {
                    return bad("doc_index not strictly increasing".into());
                }
                if s.start != p.end + 1 {
                    return bad(format!("gap between spans {p:?} and {s:?} is not one separator"));
                }
            }
            if (s.end as usize) < n && self.tokens[s.end as usize] != EOS {
                return bad(format!("span {s:?} not followed by EOS"));
            }
            for i in s.range() {
                if is_special(self.tokens[i]) {
                    return bad(format!("special token inside span at {i}"));
                }
                covered[i] = true;
            }
            prev = Some(s);
        }
        for (i, &t) in self.tokens.iter().enumerate() {
            if !covered[i] && !matches!(t, EOS | PAD | BOS) {
                return bad(format!("content token outside spans at {i}"));
            }
        }
        for (i, &m) in self.loss_mask.iter().enumerate() {
            if m && (i + 1 >= n || self.tokens[i + 1] == PAD) {
                return bad(format!("loss_mask set at {i} without a target"));
            }
        }
        Ok(())
    }
}

/// Loss mask for every position whose next token exists and is not PAD.
pub fn next_token_mask(tokens: &[TokenId]) -> Vec<bool> {
    let n = tokens.len();
    (0..n).map(|i| i + 1 < n && tokens[i + 1] != PAD).collect()
}
