//! Experiments comparing models with and without the author's history.

use std::time::{Duration, Instant};

use hulm::corpus::AuthorStream;
use hulm::eval::{evaluate_nll, paired_t_test, NllSupport};
use hulm::model::{Checkpoint, LmParameters, ModelConfig, PosInit};
use hulm::packing::{pack_author_with, pack_independent_with, PackOptions, PackedInstance};
use hulm::train::synthetic::{generate, SynthConfig};
use hulm::train::{
    finetune, predict, pretrain, score, FinetuneStyle, Objective, PretrainMode, SynthLabel, TaskKind, TaskSpec,
    TrainConfig, Trainable,
};

use super::{ensure, within};

const SEEDS: [u64; 3] = [42, 3, 1234];
const BOS: PackOptions = PackOptions { prepend_bos: true };

fn small_model(d_model: usize) -> Result<LmParameters<f32>, String> {
    let config = ModelConfig {
        d_model,
        d_ff: 4 * d_model,
        n_layers: 2,
        max_positions: 1024,
        seed: 1,
        pos_init: PosInit::Sinusoidal,
        ..ModelConfig::default()
    };
    LmParameters::init(config).map_err(|e| e.to_string())
}

fn by_author(streams: &[AuthorStream], max_len: usize) -> Result<Vec<PackedInstance>, String> {
    let mut out = Vec::new();
    for s in streams {
        out.extend(pack_author_with(s, max_len, BOS).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn one_per_doc(streams: &[AuthorStream], max_len: usize) -> Result<Vec<PackedInstance>, String> {
    let mut out = Vec::new();
    for s in streams {
        out.extend(pack_independent_with(&s.documents, max_len, BOS).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn targets(instances: &[PackedInstance]) -> usize {
    instances.iter().map(|i| i.loss_mask.iter().filter(|&&m| m).count()).sum()
}

/// Same model, same optimizer, same supervised tokens; only the packing differs.
/// Both packings start every instance with BOS, so each scores every document
/// token and separator exactly once.
pub fn ac2() -> Result<String, String> {
    let start = Instant::now();
    let cfg = SynthConfig { n_authors: 200, style_strength: 0.8, seed: 42, ..SynthConfig::default() };
    let streams = generate(&cfg).map_err(|e| e.to_string())?.streams(SynthLabel::None);
    let (train, rest) = streams.split_at(160);
    let (dev, test) = rest.split_at(20);
    let per_author = cfg.docs_per_author * (cfg.doc_len + 1);

    let base = small_model(64)?;
    let tc = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 12,
        trainable: Trainable::Full,
        batch_tokens: Some(per_author - 1),
        ..TrainConfig::default()
    };
    let mut nll = Vec::new();
    for mode in [PretrainMode::Hulm, PretrainMode::Standard] {
        let pack = |s: &[AuthorStream]| match mode {
            PretrainMode::Hulm => by_author(s, 128),
            PretrainMode::Standard => one_per_doc(s, 200),
        };
        let (tr, dv, te) = (pack(train)?, pack(dev)?, pack(test)?);
        let out = pretrain(&base, &tr, &dv, &tc, mode).map_err(|e| e.to_string())?;
        let ck = out.checkpoint;
        let sum = evaluate_nll(&ck.params, ck.adapter.as_ref(), &te, NllSupport::LossMask).map_err(|e| e.to_string())?;
        nll.push((targets(&tr), sum.count, sum.mean().unwrap_or(f64::NAN)));
    }
    let ((hu_train, hu_n, hu), (st_train, st_n, st)) = (nll[0], nll[1]);
    ensure(hu_train == st_train, || format!("training targets differ: {hu_train} vs {st_train}"))?;
    ensure(hu_n == st_n, || format!("held-out targets differ: {hu_n} vs {st_n}"))?;
    let gain = 1.0 - hu / st;
    ensure(gain >= 0.03, || format!("hulm nll {hu:.4} vs standard {st:.4}, only {:.2}% lower", 100.0 * gain))?;
    within(Duration::from_secs(600), start)?;
    Ok(format!("hulm nll {hu:.4} vs standard {st:.4} ({:.2}% lower, {hu_n} tokens)", 100.0 * gain))
}

struct Comparison {
    huft: Vec<f64>,
    tft: Vec<f64>,
    p: f64,
}

impl Comparison {
    fn mean_delta(&self) -> f64 {
        self.huft.iter().zip(&self.tft).map(|(a, b)| a - b).sum::<f64>() / self.huft.len() as f64
    }

    fn summary(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ");
        format!("huft r [{}] tft r [{}] delta {:.3} p {:.4}", fmt(&self.huft), fmt(&self.tft), self.mean_delta(), self.p)
    }
}

/// Pretrains a small backbone on the training authors' text, then fine-tunes
/// it on the author-trait regression task with and without history.
fn huft_vs_tft(style_strength: f64) -> Result<Comparison, String> {
    let cfg = SynthConfig { n_authors: 800, docs_per_author: 24, style_strength, seed: 42, ..SynthConfig::default() };
    let mut train = generate(&cfg).map_err(|e| e.to_string())?.streams(SynthLabel::Trait);
    let test = train.split_off(600);
    let dev = train.split_off(500);

    let lm = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 12,
        trainable: Trainable::Full,
        batch_tokens: Some(cfg.docs_per_author * (cfg.doc_len + 1)),
        ..TrainConfig::default()
    };
    let pre = pretrain(&small_model(32)?, &by_author(&train, 256)?, &by_author(&dev, 256)?, &lm, PretrainMode::Hulm)
        .map_err(|e| e.to_string())?;
    let backbone: Checkpoint<f32> = pre.checkpoint;

    let mut task = TaskSpec::from_streams(TaskKind::PersonLevel, Objective::Regression, train, dev, test)
        .map_err(|e| e.to_string())?;
    task.max_len = 256;
    let labels = TaskSpec::labels(&task.test);
    let (mut huft, mut tft) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        for style in [FinetuneStyle::Huft, FinetuneStyle::Tft] {
            let tc = TrainConfig {
                learning_rate: 1e-3,
                max_epochs: 6,
                batch_size: 8,
                seed,
                trainable: Trainable::Full,
                ..TrainConfig::default()
            };
            let out = finetune(&backbone, &task, style, &tc).map_err(|e| e.to_string())?;
            let ck = &out.checkpoint;
            let preds = predict(&ck.params, ck.adapter.as_ref(), &out.head, &task.test, task.kind, style.include_history(), task.max_len)
                .map_err(|e| e.to_string())?;
            let r = score(task.objective, &labels, &preds).map_err(|e| e.to_string())?;
            match style {
                FinetuneStyle::Huft => huft.push(r),
                FinetuneStyle::Tft => tft.push(r),
            }
        }
    }
    let p = paired_t_test(&huft, &tft).map_err(|e| e.to_string())?;
    Ok(Comparison { huft, tft, p })
}

pub fn ac3() -> Result<String, String> {
    let start = Instant::now();
    let c = huft_vs_tft(0.8)?;
    ensure(c.mean_delta() >= 0.10, || format!("gap too small: {}", c.summary()))?;
    ensure(c.p < 0.05, || format!("not significant: {}", c.summary()))?;
    within(Duration::from_secs(900), start)?;
    Ok(c.summary())
}

pub fn ac4() -> Result<String, String> {
    let c = huft_vs_tft(0.0)?;
    ensure(c.p > 0.05, || format!("difference without any style: {}", c.summary()))?;
    Ok(c.summary())
}
