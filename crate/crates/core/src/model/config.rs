use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packing::VOCAB_SIZE;

/// Initial values of the learned position table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosInit {
    #[default]
    Gaussian,
    /// Sine/cosine pairs at geometric frequencies, amplitude [`SINUSOID_SCALE`].
    Sinusoidal,
}

pub const SINUSOID_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub seed: u64,
    /// Output head shares the token embedding matrix.
    #[serde(default)]
    pub tie_embeddings: bool,
    #[serde(default)]
    pub pos_init: PosInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_positions: 1024,
            seed: 0,
            tie_embeddings: false,
            pos_init: PosInit::Gaussian,
        }
    }
}

impl ModelConfig {
    /// Model used by gradient checks: d_model 8, one layer.
    pub fn tiny() -> Self {
        Self {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_positions: 32,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("model config: {m}")));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("sizes must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_positions == 0 {
            return bad("max_positions must be positive");
        }
        Ok(())
    }
}
