use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DEFAULT_ALPHA, DEFAULT_RANK};

/// Which tensors a run updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    AdapterOnly,
    Full,
    HeadOnly,
}

impl std::str::FromStr for Trainable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adapter_only" => Ok(Self::AdapterOnly),
            "full" => Ok(Self::Full),
            "head_only" => Ok(Self::HeadOnly),
            _ => Err(Error::Config(format!("unknown trainable set {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Instances (pre-training) or examples (task training) per optimizer step.
    pub batch_size: usize,
    /// When set, pre-training batches are filled up to this many loss tokens
    /// instead of `batch_size` instances.
    pub batch_tokens: Option<usize>,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub trainable: Trainable,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    /// Block size for 4-bit quantization of the frozen base; `None` keeps full precision.
    pub quantize_block: Option<usize>,
    /// Return pre-training checkpoints with the adapter folded into the base.
    pub merge_adapter: bool,
    /// Worker threads for per-instance gradients; 1 is the reference path.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 1,
            batch_tokens: None,
            max_epochs: 5,
            early_stop_patience: 6,
            seed: 42,
            trainable: Trainable::AdapterOnly,
            lora_rank: DEFAULT_RANK,
            lora_alpha: DEFAULT_ALPHA,
            quantize_block: None,
            merge_adapter: false,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be >= 1");
        }
        if self.batch_size == 0 || self.batch_tokens == Some(0) {
            return bad("batch size must be >= 1");
        }
        if self.threads == 0 {
            return bad("threads must be >= 1");
        }
        if self.quantize_block == Some(0) {
            return bad("quantize_block must be >= 1");
        }
        Ok(())
    }
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_metric: Option<f64>,
}

/// Tracks the best dev loss and the run of non-improving evaluations.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    bad_evals: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            bad_evals: 0,
        }
    }

    /// Records an evaluation; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, dev_loss: f64) -> bool {
        if dev_loss < self.best {
            self.best = dev_loss;
            self.best_epoch = Some(epoch);
            self.bad_evals = 0;
            true
        } else {
            self.bad_evals += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_evals >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

pub fn write_run_log(path: impl AsRef<std::path::Path>, log: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in log {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
