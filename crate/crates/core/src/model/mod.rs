//! Desk-scale pre-LN causal transformer with analytic gradients, LoRA adapters,
//! 4-bit block quantization, pooling and a binary checkpoint container.

mod checkpoint;
mod config;
mod forward;
mod lora;
mod params;
mod pool;
mod quant;
mod scalar;
mod tensors;

pub use checkpoint::{
    decode_container, encode_container, read_container, write_container, Checkpoint, RawContainer, TensorRecord,
    FORMAT_VERSION, MAGIC,
};
pub use config::{ModelConfig, PosInit, SINUSOID_SCALE};
pub use forward::{
    backward, backward_from, forward, forward_cached, forward_hidden, nll_gradients, nll_loss, nll_sum,
    shifted_targets, Cache, ForwardOutput, GradTarget, Gradients, HiddenStates, NllSum, LN_EPS,
};
pub use lora::{lora_merge, LoraAdapter, LoraPair, DEFAULT_ALPHA, DEFAULT_RANK, PROJECTIONS};
pub use params::{LayerParams, LmParameters, INIT_STD};
pub use pool::{pool, pool_backward, PoolMode};
pub use quant::{dequantize, quantize_4bit, quantize_frozen, QuantizedTensor, CODE_MAX};
pub use scalar::Scalar;
pub use tensors::{axpy, fill_zero, scale, Tensors};

#[cfg(test)]
mod tests;
