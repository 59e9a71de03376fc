use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{LmParameters, LoraAdapter, ModelConfig, Scalar, Tensors};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HULM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the payload that follows the header.
    pub offset: u64,
}

/// A decoded container: header fields plus every tensor widened to `f64`.
#[derive(Debug, Clone)]
pub struct RawContainer {
    pub header: Map<String, Value>,
    pub records: Vec<TensorRecord>,
    values: HashMap<String, Vec<f64>>,
}

impl RawContainer {
    pub fn has(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.values.get(name).map(Vec::as_slice)
    }

    /// Copies stored tensors into `set` by name; every tensor of `set` must be present with its shape.
    pub fn fill<S: Scalar, T: Tensors<S> + ?Sized>(&self, set: &mut T) -> Result<()> {
        for (name, mut t) in set.tensors_mut() {
            let rec = self
                .records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if rec.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: stored shape {:?}, expected {:?}",
                    rec.shape,
                    t.shape()
                )));
            }
            for (d, &v) in t.iter_mut().zip(&self.values[&name]) {
                *d = S::of(v);
            }
        }
        Ok(())
    }
}

/// Serializes `sets` after a JSON header made of `header` plus the tensor directory.
pub fn encode_container<S: Scalar>(mut header: Map<String, Value>, sets: &[&dyn Tensors<S>]) -> Result<Vec<u8>> {
    let mut records = Vec::new();
    let mut payload = Vec::new();
    for set in sets {
        for (name, t) in set.tensors() {
            records.push(TensorRecord {
                name,
                shape: t.shape().to_vec(),
                dtype: S::DTYPE.to_string(),
                offset: payload.len() as u64,
            });
            for &v in t.iter() {
                v.write_le(&mut payload);
            }
        }
    }
    header.insert("tensors".into(), serde_json::to_value(&records)?);
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_container(buf: &[u8]) -> Result<RawContainer> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if buf.len() < 16 || &buf[..4] != MAGIC {
        return Err(bad("missing HULM magic"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| bad("truncated header"))?;
    let mut header: Map<String, Value> = serde_json::from_slice(&buf[16..body])?;
    let records: Vec<TensorRecord> = serde_json::from_value(
        header
            .remove("tensors")
            .ok_or_else(|| bad("header lacks tensor directory"))?,
    )?;
    let payload = &buf[body..];
    let mut values = HashMap::with_capacity(records.len());
    for r in &records {
        let width = match r.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(Error::Checkpoint(format!("unsupported dtype {other}"))),
        };
        let n: usize = r.shape.iter().product();
        let start = r.offset as usize;
        let end = start
            .checked_add(n * width)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} overruns payload", r.name)))?;
        let data = payload[start..end]
            .chunks_exact(width)
            .map(|c| if width == 4 { f32::read_le(c) as f64 } else { f64::read_le(c) })
            .collect();
        values.insert(r.name.clone(), data);
    }
    Ok(RawContainer { header, records, values })
}

pub fn write_container<S: Scalar>(
    path: impl AsRef<Path>,
    header: Map<String, Value>,
    sets: &[&dyn Tensors<S>],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_container(header, sets)?).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<RawContainer> {
    let path = path.as_ref();
    decode_container(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LoraHeader {
    rank: usize,
    alpha: f64,
}

/// Base parameters, an optional unmerged adapter, and free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub params: LmParameters<S>,
    pub adapter: Option<LoraAdapter<S>>,
    pub meta: Value,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(params: LmParameters<S>) -> Self {
        Self {
            params,
            adapter: None,
            meta: Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = Map::new();
        header.insert("kind".into(), "lm".into());
        header.insert("config".into(), serde_json::to_value(self.params.config)?);
        header.insert(
            "lora".into(),
            match &self.adapter {
                Some(a) => serde_json::to_value(LoraHeader { rank: a.rank, alpha: a.alpha })?,
                None => Value::Null,
            },
        );
        header.insert("meta".into(), self.meta.clone());
        let mut sets: Vec<&dyn Tensors<S>> = vec![&self.params];
        if let Some(a) = &self.adapter {
            sets.push(a);
        }
        encode_container(header, &sets)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let raw = decode_container(buf)?;
        if raw.header.get("kind").and_then(Value::as_str) != Some("lm") {
            return Err(Error::Checkpoint("not a language-model checkpoint".into()));
        }
        let config: ModelConfig = serde_json::from_value(
            raw.header
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("header lacks config".into()))?,
        )?;
        let mut params = LmParameters::init(config)?;
        raw.fill(&mut params)?;
        let adapter = match raw.header.get("lora") {
            Some(v) if !v.is_null() => {
                let h: LoraHeader = serde_json::from_value(v.clone())?;
                let mut a = LoraAdapter::new(&config, h.rank, h.alpha, 0)?;
                raw.fill(&mut a)?;
                Some(a)
            }
            _ => None,
        };
        Ok(Self {
            params,
            adapter,
            meta: raw.header.get("meta").cloned().unwrap_or(Value::Null),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
