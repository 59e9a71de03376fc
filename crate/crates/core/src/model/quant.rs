use ndarray::Array2;

use super::{LmParameters, Scalar};
use crate::error::{Error, Result};

pub const CODE_MAX: i8 = 7;

/// Symmetric 4-bit block quantization: per block `scale = absmax / 7`,
/// `code = round(x / scale)` clamped to `[-7, 7]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub len: usize,
    pub block_size: usize,
    pub scales: Vec<f64>,
    /// Two codes per byte, low nibble first, stored as `code + 8`.
    pub packed: Vec<u8>,
}

impl QuantizedTensor {
    pub fn code(&self, i: usize) -> i8 {
        let byte = self.packed[i / 2];
        let nibble = if i % 2 == 0 { byte & 0x0f } else { byte >> 4 };
        nibble as i8 - 8
    }

    pub fn codes(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.code(i)).collect()
    }
}

pub fn quantize_4bit<S: Scalar>(values: &[S], block_size: usize) -> Result<QuantizedTensor> {
    if block_size == 0 {
        return Err(Error::Invalid("block_size must be at least 1".into()));
    }
    let mut scales = Vec::with_capacity(values.len().div_ceil(block_size));
    let mut packed = vec![0u8; values.len().div_ceil(2)];
    for (b, block) in values.chunks(block_size).enumerate() {
        let absmax = block.iter().fold(0.0f64, |m, v| m.max(v.f64().abs()));
        let scale = absmax / CODE_MAX as f64;
        scales.push(scale);
        for (j, v) in block.iter().enumerate() {
            let code = if scale > 0.0 {
                (v.f64() / scale).round().clamp(-(CODE_MAX as f64), CODE_MAX as f64) as i8
            } else {
                0
            };
            let i = b * block_size + j;
            let nibble = (code + 8) as u8;
            packed[i / 2] |= if i % 2 == 0 { nibble } else { nibble << 4 };
        }
    }
    Ok(QuantizedTensor {
        len: values.len(),
        block_size,
        scales,
        packed,
    })
}

pub fn dequantize<S: Scalar>(q: &QuantizedTensor) -> Vec<S> {
    (0..q.len)
        .map(|i| S::of(q.code(i) as f64 * q.scales[i / q.block_size]))
        .collect()
}

fn roundtrip<S: Scalar>(w: &Array2<S>, block_size: usize) -> Result<Array2<S>> {
    let flat: Vec<S> = w.iter().copied().collect();
    let deq = dequantize(&quantize_4bit(&flat, block_size)?);
    Ok(Array2::from_shape_vec(w.raw_dim(), deq).expect("same length"))
}

/// Replaces every attention and feed-forward matrix by its 4-bit reconstruction.
///
/// Embeddings, layer norms and biases stay in full precision. The result is the
/// frozen base an adapter is trained against.
pub fn quantize_frozen<S: Scalar>(params: &LmParameters<S>, block_size: usize) -> Result<LmParameters<S>> {
    let mut out = params.clone();
    for layer in &mut out.layers {
        for w in layer.projections_mut() {
            *w = roundtrip(w, block_size)?;
        }
        layer.w1 = roundtrip(&layer.w1, block_size)?;
        layer.w2 = roundtrip(&layer.w2, block_size)?;
    }
    Ok(out)
}
