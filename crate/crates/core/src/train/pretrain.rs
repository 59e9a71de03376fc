use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{batch_gradients, make_batches, thread_pool};
use super::{Adam, EarlyStopping, EpochLog, TrainConfig, Trainable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_nll, NllSupport};
use crate::model::{lora_merge, quantize_frozen, Checkpoint, GradTarget, LmParameters, LoraAdapter, Scalar};
use crate::packing::PackedInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainMode {
    /// Author instances: each document conditioned on the author's earlier ones.
    Hulm,
    /// Documents packed and shuffled independently.
    Standard,
}

impl std::str::FromStr for PretrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hulm" => Ok(Self::Hulm),
            "standard" => Ok(Self::Standard),
            _ => Err(Error::Config(format!("unknown pretraining mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<S> {
    /// Best-dev state: merged into `params` when `merge_adapter` is set.
    pub checkpoint: Checkpoint<S>,
    pub log: Vec<EpochLog>,
    pub initial_dev_loss: f64,
    pub best_epoch: usize,
    pub optimizer_steps: u64,
}

enum State<S> {
    Adapter { base: LmParameters<S>, adapter: LoraAdapter<S> },
    Full(LmParameters<S>),
}

impl<S: Scalar> State<S> {
    fn parts(&self) -> (&LmParameters<S>, Option<&LoraAdapter<S>>) {
        match self {
            State::Adapter { base, adapter } => (base, Some(adapter)),
            State::Full(p) => (p, None),
        }
    }
}

/// Next-token training on packed instances with per-epoch dev evaluation and
/// early stopping. The returned checkpoint is the best-dev state.
pub fn pretrain<S: Scalar>(
    base: &LmParameters<S>,
    train: &[PackedInstance],
    dev: &[PackedInstance],
    config: &TrainConfig,
    mode: PretrainMode,
) -> Result<PretrainOutcome<S>> {
    pretrain_with(base, train, dev, config, mode, |_| {})
}

/// [`pretrain`] with a callback invoked after every epoch.
pub fn pretrain_with<S: Scalar>(
    base: &LmParameters<S>,
    train: &[PackedInstance],
    dev: &[PackedInstance],
    config: &TrainConfig,
    mode: PretrainMode,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<PretrainOutcome<S>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("pre-training corpus"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("pre-training dev set"));
    }
    if mode == PretrainMode::Standard {
        if let Some(i) = train.iter().position(|x| x.spans.len() > 1) {
            return Err(Error::Invalid(format!(
                "standard mode expects one document per instance; instance {i} has {}",
                train[i].spans.len()
            )));
        }
    }
    let frozen = match config.quantize_block {
        Some(b) => quantize_frozen(base, b)?,
        None => base.clone(),
    };
    let mut state = match config.trainable {
        Trainable::AdapterOnly => State::Adapter {
            adapter: LoraAdapter::new(&base.config, config.lora_rank, config.lora_alpha, config.seed)?,
            base: frozen,
        },
        Trainable::Full => State::Full(frozen),
        Trainable::HeadOnly => {
            return Err(Error::Config("pre-training has no task head; use adapter_only or full".into()))
        }
    };
    let target = match config.trainable {
        Trainable::AdapterOnly => GradTarget::Adapter,
        _ => GradTarget::Base,
    };
    let pool = thread_pool(config.threads)?;
    let dev_loss = |s: &State<S>| -> Result<f64> {
        let (p, a) = s.parts();
        evaluate_nll(p, a, dev, NllSupport::LossMask)?.mean()
    };

    let initial_dev_loss = dev_loss(&state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(config.learning_rate);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut log = Vec::new();
    let mut best: Option<State<S>> = None;

    for epoch in 1..=config.max_epochs {
        let mut epoch_loss = crate::model::NllSum::default();
        for batch in make_batches(train, &mut rng, config.batch_size, config.batch_tokens) {
            let insts: Vec<&PackedInstance> = batch.iter().map(|&i| &train[i]).collect();
            let (p, a) = state.parts();
            let (loss, grads) = match batch_gradients(p, a, &insts, target, pool.as_ref()) {
                Err(Error::EmptyLossSupport) => continue,
                other => other?,
            };
            epoch_loss += loss;
            match &mut state {
                State::Adapter { adapter, .. } => opt.step(adapter, grads.adapter.as_ref().expect("adapter grads")),
                State::Full(p) => opt.step(p, grads.params.as_ref().expect("param grads")),
            }
        }
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss.mean().unwrap_or(f64::NAN),
            dev_loss: dev_loss(&state)?,
            dev_metric: None,
        };
        on_epoch(&entry);
        if !entry.dev_loss.is_finite() {
            return Err(Error::Invalid(format!("dev loss diverged at epoch {epoch}")));
        }
        if stopper.observe(epoch, entry.dev_loss) {
            best = Some(match &state {
                State::Adapter { base, adapter } => State::Adapter {
                    base: base.clone(),
                    adapter: adapter.clone(),
                },
                State::Full(p) => State::Full(p.clone()),
            });
        }
        log.push(entry);
        if stopper.should_stop() {
            break;
        }
    }

    let best_epoch = stopper.best().map(|(e, _)| e).unwrap_or(0);
    let final_state = best.unwrap_or(state);
    let meta = serde_json::json!({
        "mode": mode,
        "trainable": config.trainable,
        "best_epoch": best_epoch,
        "quantize_block": config.quantize_block,
    });
    let checkpoint = match final_state {
        State::Adapter { base, adapter } if config.merge_adapter => Checkpoint {
            params: lora_merge(&base, &adapter)?,
            adapter: None,
            meta,
        },
        State::Adapter { base, adapter } => Checkpoint {
            params: base,
            adapter: Some(adapter),
            meta,
        },
        State::Full(p) => Checkpoint { params: p, adapter: None, meta },
    };
    Ok(PretrainOutcome {
        checkpoint,
        log,
        initial_dev_loss,
        best_epoch,
        optimizer_steps: opt.steps(),
    })
}
