use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{add_gradients, scale_gradients, thread_pool};
use super::task::{aggregate_person, Objective, TaskExample, TaskHead, TaskKind, TaskSpec};
use super::{Adam, EarlyStopping, EpochLog, TrainConfig, Trainable};
use crate::error::{Error, Result};
use crate::eval::{pearson_r, weighted_f1};
use crate::model::{
    axpy, backward_from, forward_cached, forward_hidden, lora_merge, pool, pool_backward, quantize_frozen,
    Checkpoint, GradTarget, Gradients, LmParameters, LoraAdapter, PoolMode, Scalar,
};
use crate::packing::{locate_pool_positions, pack_for_task, PackedInstance, PoolPositions, TaskTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneStyle {
    /// Instances carry the author's earlier documents.
    Huft,
    /// Instances hold the target document alone.
    Tft,
}

impl FinetuneStyle {
    pub fn include_history(self) -> bool {
        self == FinetuneStyle::Huft
    }
}

impl std::str::FromStr for FinetuneStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "huft" => Ok(Self::Huft),
            "tft" => Ok(Self::Tft),
            _ => Err(Error::Config(format!("unknown fine-tuning style {s:?}"))),
        }
    }
}

/// One forward unit: a packed instance, the positions to pool and the example it belongs to.
#[derive(Debug, Clone)]
pub struct TaskItem {
    pub instance: PackedInstance,
    pub positions: Vec<usize>,
    pub mode: PoolMode,
    pub label: f64,
    pub example: usize,
}

/// Packs examples for a task.
///
/// Document-level: one instance per example, pooled at the target's last
/// token. Person-level with history: one instance per author holding as many
/// recent documents as fit, mean-pooled over all content tokens. Person-level
/// without history: one instance per document, mean-pooled over that
/// document, later aggregated per author.
pub fn task_items(
    examples: &[TaskExample],
    kind: TaskKind,
    include_history: bool,
    max_len: usize,
) -> Result<Vec<TaskItem>> {
    let mut items = Vec::new();
    for (ei, ex) in examples.iter().enumerate() {
        match (kind, ex.target) {
            (TaskKind::DocumentLevel, Some(t)) => {
                let instance = pack_for_task(&ex.stream, TaskTarget::Index(t), max_len, include_history)?;
                let positions = locate_pool_positions(&instance, PoolPositions::TargetLastToken)?;
                items.push(TaskItem { instance, positions, mode: PoolMode::Last, label: ex.label, example: ei });
            }
            (TaskKind::DocumentLevel, None) => {
                return Err(Error::Invalid("document-level example without a target document".into()))
            }
            (TaskKind::PersonLevel, _) if include_history => {
                let instance = pack_for_task(&ex.stream, TaskTarget::All, max_len, true)?;
                let positions = locate_pool_positions(&instance, PoolPositions::AuthorMean)?;
                items.push(TaskItem { instance, positions, mode: PoolMode::Mean, label: ex.label, example: ei });
            }
            (TaskKind::PersonLevel, _) => {
                let before = items.len();
                for t in 0..ex.stream.documents.len() {
                    let instance = pack_for_task(&ex.stream, TaskTarget::Index(t), max_len, false)?;
                    if instance.spans.is_empty() {
                        continue;
                    }
                    let positions = locate_pool_positions(&instance, PoolPositions::AuthorMean)?;
                    items.push(TaskItem { instance, positions, mode: PoolMode::Mean, label: ex.label, example: ei });
                }
                if items.len() == before {
                    return Err(Error::Empty("author without non-empty documents"));
                }
            }
        }
    }
    Ok(items)
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome<S> {
    /// Backbone used by the head: merged base plus the task adapter, if any.
    pub checkpoint: Checkpoint<S>,
    pub head: TaskHead<S>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

struct Backbone<S> {
    params: LmParameters<S>,
    adapter: Option<LoraAdapter<S>>,
}

fn effective_max_len<S: Scalar>(task: &TaskSpec, params: &LmParameters<S>) -> usize {
    task.max_len.min(params.config.max_positions)
}

fn standardize<S: Scalar>(head: &mut TaskHead<S>, train: &[TaskExample]) {
    if head.objective == Objective::Regression {
        let n = train.len() as f64;
        let mean = train.iter().map(|e| e.label).sum::<f64>() / n;
        let var = train.iter().map(|e| (e.label - mean).powi(2)).sum::<f64>() / n;
        head.label_mean = mean;
        head.label_std = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
}

/// Score on a split: weighted F1 or Pearson r over per-example predictions.
pub fn score(objective: Objective, labels: &[f64], predictions: &[f64]) -> Result<f64> {
    match objective {
        Objective::Classification { .. } => {
            let t: Vec<i64> = labels.iter().map(|&v| v as i64).collect();
            let p: Vec<i64> = predictions.iter().map(|&v| v as i64).collect();
            weighted_f1(&t, &p)
        }
        Objective::Regression => pearson_r(predictions, labels),
    }
}

fn aggregate_outputs<S: Scalar>(
    head: &TaskHead<S>,
    items: &[TaskItem],
    outputs: &[Array1<S>],
    n_examples: usize,
) -> Result<Vec<f64>> {
    let mut per: Vec<Vec<f64>> = vec![Vec::new(); n_examples];
    for (item, out) in items.iter().zip(outputs) {
        per[item.example].push(head.decode(out));
    }
    per.iter().map(|p| aggregate_person(p, head.objective)).collect()
}

fn pooled_features<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    items: &[TaskItem],
) -> Result<Vec<Array1<S>>> {
    items
        .iter()
        .map(|it| pool(&forward_hidden(params, adapter, &it.instance.tokens)?, &it.positions, it.mode))
        .collect()
}

/// Per-example predictions of a trained head on top of a backbone.
pub fn predict<S: Scalar>(
    params: &LmParameters<S>,
    adapter: Option<&LoraAdapter<S>>,
    head: &TaskHead<S>,
    examples: &[TaskExample],
    kind: TaskKind,
    include_history: bool,
    max_len: usize,
) -> Result<Vec<f64>> {
    let items = task_items(examples, kind, include_history, max_len.min(params.config.max_positions))?;
    let feats = pooled_features(params, adapter, &items)?;
    let outs: Vec<Array1<S>> = feats.iter().map(|f| head.forward(f)).collect();
    aggregate_outputs(head, &items, &outs, examples.len())
}

struct ItemGrad<S> {
    loss: f64,
    head: TaskHead<S>,
    backbone: Option<Gradients<S>>,
}

fn item_gradient<S: Scalar>(
    bb: &Backbone<S>,
    head: &TaskHead<S>,
    item: &TaskItem,
    target: Option<GradTarget>,
) -> Result<ItemGrad<S>> {
    let (fwd, cache) = forward_cached(&bb.params, bb.adapter.as_ref(), &item.instance.tokens, false)?;
    let pooled = pool(&fwd.hidden, &item.positions, item.mode)?;
    let out = head.forward(&pooled);
    let (loss, dout) = head.loss(&out, item.label);
    let mut g = head.zeros_like();
    for (i, &d) in dout.iter().enumerate() {
        g.weight.row_mut(i).scaled_add(d, &pooled);
    }
    g.bias += &dout;
    let backbone = match target {
        Some(t) => {
            let dpooled = head.weight.t().dot(&dout);
            let dh = pool_backward(fwd.hidden.nrows(), &item.positions, item.mode, &dpooled);
            Some(backward_from(&bb.params, bb.adapter.as_ref(), &cache, None, Some(&dh), t)?)
        }
        None => None,
    };
    Ok(ItemGrad { loss, head: g, backbone })
}

fn eval_split<S: Scalar>(
    bb: &Backbone<S>,
    head: &TaskHead<S>,
    items: &[TaskItem],
    examples: &[TaskExample],
    cached: Option<&[Array1<S>]>,
) -> Result<(f64, Option<f64>)> {
    let feats = match cached {
        Some(f) => f.to_vec(),
        None => pooled_features(&bb.params, bb.adapter.as_ref(), items)?,
    };
    let outs: Vec<Array1<S>> = feats.iter().map(|f| head.forward(f)).collect();
    let loss = items
        .iter()
        .zip(&outs)
        .map(|(it, o)| head.loss(o, it.label).0)
        .sum::<f64>()
        / items.len() as f64;
    let preds = aggregate_outputs(head, items, &outs, examples.len())?;
    let metric = score(head.objective, &TaskSpec::labels(examples), &preds).ok();
    Ok((loss, metric))
}

fn run<S: Scalar>(
    mut bb: Backbone<S>,
    task: &TaskSpec,
    include_history: bool,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Backbone<S>, TaskHead<S>, Vec<EpochLog>, usize)> {
    config.validate()?;
    let max_len = effective_max_len(task, &bb.params);
    let train_items = task_items(&task.train, task.kind, include_history, max_len)?;
    let dev_items = task_items(&task.dev, task.kind, include_history, max_len)?;
    let mut head = TaskHead::new(task.objective, bb.params.config.d_model, config.seed);
    standardize(&mut head, &task.train);

    let target = match config.trainable {
        Trainable::AdapterOnly => Some(GradTarget::Adapter),
        Trainable::Full => Some(GradTarget::Base),
        Trainable::HeadOnly => None,
    };
    // A frozen backbone yields fixed features; compute them once.
    let (train_feats, dev_feats) = if target.is_none() {
        (
            Some(pooled_features(&bb.params, bb.adapter.as_ref(), &train_items)?),
            Some(pooled_features(&bb.params, bb.adapter.as_ref(), &dev_items)?),
        )
    } else {
        (None, None)
    };
    let pool_threads = thread_pool(config.threads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head_opt = Adam::new(config.learning_rate);
    let mut bb_opt = Adam::new(config.learning_rate);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut log = Vec::new();
    let mut best: Option<(Option<LoraAdapter<S>>, Option<LmParameters<S>>, TaskHead<S>)> = None;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let parts: Vec<ItemGrad<S>> = match &train_feats {
                Some(feats) => batch
                    .iter()
                    .map(|&i| {
                        let out = head.forward(&feats[i]);
                        let (loss, dout) = head.loss(&out, train_items[i].label);
                        let mut g = head.zeros_like();
                        for (r, &d) in dout.iter().enumerate() {
                            g.weight.row_mut(r).scaled_add(d, &feats[i]);
                        }
                        g.bias += &dout;
                        ItemGrad { loss, head: g, backbone: None }
                    })
                    .collect(),
                None => {
                    let one = |&i: &usize| item_gradient(&bb, &head, &train_items[i], target);
                    match &pool_threads {
                        Some(p) => p.install(|| batch.par_iter().map(one).collect::<Result<Vec<_>>>())?,
                        None => batch.iter().map(one).collect::<Result<Vec<_>>>()?,
                    }
                }
            };
            let inv = S::one() / S::of(parts.len() as f64);
            let mut head_grad = head.zeros_like();
            let mut bb_grad: Option<Gradients<S>> = None;
            for p in parts {
                epoch_loss += p.loss;
                axpy(&mut head_grad, inv, &p.head);
                if let Some(g) = p.backbone {
                    match bb_grad.as_mut() {
                        None => bb_grad = Some(g),
                        Some(acc) => add_gradients(acc, &g),
                    }
                }
            }
            head_opt.step(&mut head, &head_grad);
            if let Some(mut g) = bb_grad {
                scale_gradients(&mut g, inv);
                match (g.adapter.as_ref(), g.params.as_ref()) {
                    (Some(ga), _) => bb_opt.step(bb.adapter.as_mut().expect("adapter present"), ga),
                    (None, Some(gp)) => bb_opt.step(&mut bb.params, gp),
                    (None, None) => {}
                }
            }
        }
        let (dev_loss, dev_metric) = eval_split(&bb, &head, &dev_items, &task.dev, dev_feats.as_deref())?;
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / train_items.len() as f64,
            dev_loss,
            dev_metric,
        };
        on_epoch(&entry);
        if !dev_loss.is_finite() {
            return Err(Error::Invalid(format!("dev loss diverged at epoch {epoch}")));
        }
        if stopper.observe(epoch, dev_loss) {
            let params = (config.trainable == Trainable::Full).then(|| bb.params.clone());
            best = Some((bb.adapter.clone(), params, head.clone()));
        }
        log.push(entry);
        if stopper.should_stop() {
            break;
        }
    }
    let best_epoch = stopper.best().map(|(e, _)| e).unwrap_or(0);
    if let Some((adapter, params, h)) = best {
        bb.adapter = adapter;
        if let Some(p) = params {
            bb.params = p;
        }
        head = h;
    }
    Ok((bb, head, log, best_epoch))
}

fn merged_base<S: Scalar>(checkpoint: &Checkpoint<S>) -> Result<LmParameters<S>> {
    match &checkpoint.adapter {
        Some(a) => lora_merge(&checkpoint.params, a),
        None => Ok(checkpoint.params.clone()),
    }
}

/// Trains a task head jointly with the trainable backbone tensors.
///
/// An adapter stored in `checkpoint` is merged first; adapter-only training
/// then attaches a fresh task adapter to the (optionally quantized) base.
pub fn finetune<S: Scalar>(
    checkpoint: &Checkpoint<S>,
    task: &TaskSpec,
    style: FinetuneStyle,
    config: &TrainConfig,
) -> Result<FinetuneOutcome<S>> {
    finetune_with(checkpoint, task, style, config, |_| {})
}

pub fn finetune_with<S: Scalar>(
    checkpoint: &Checkpoint<S>,
    task: &TaskSpec,
    style: FinetuneStyle,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<FinetuneOutcome<S>> {
    let mut params = merged_base(checkpoint)?;
    if let Some(b) = config.quantize_block {
        params = quantize_frozen(&params, b)?;
    }
    let adapter = match config.trainable {
        Trainable::AdapterOnly => Some(LoraAdapter::new(
            &params.config,
            config.lora_rank,
            config.lora_alpha,
            config.seed,
        )?),
        _ => None,
    };
    let (bb, head, log, best_epoch) = run(Backbone { params, adapter }, task, style.include_history(), config, on_epoch)?;
    let meta = serde_json::json!({
        "style": style,
        "trainable": config.trainable,
        "best_epoch": best_epoch,
    });
    Ok(FinetuneOutcome {
        checkpoint: Checkpoint {
            params: bb.params,
            adapter: bb.adapter,
            meta,
        },
        head,
        log,
        best_epoch,
    })
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome<S> {
    pub head: TaskHead<S>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Trains only a linear head on pooled last-layer states of a frozen backbone.
pub fn linear_probe<S: Scalar>(
    checkpoint: &Checkpoint<S>,
    task: &TaskSpec,
    include_history: bool,
    config: &TrainConfig,
) -> Result<ProbeOutcome<S>> {
    let config = TrainConfig {
        trainable: Trainable::HeadOnly,
        ..config.clone()
    };
    let bb = Backbone {
        params: checkpoint.params.clone(),
        adapter: checkpoint.adapter.clone(),
    };
    let (_, head, log, best_epoch) = run(bb, task, include_history, &config, |_| {})?;
    Ok(ProbeOutcome { head, log, best_epoch })
}
