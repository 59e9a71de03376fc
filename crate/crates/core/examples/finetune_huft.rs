//! Pre-trains a small backbone on author streams, then fine-tunes a
//! person-level trait regressor with and without author history. Takes a few
//! minutes.
//!
//! `cargo run --release --example finetune_huft -- [pretrain_epochs] [finetune_epochs]`

use hulm::model::{LmParameters, ModelConfig, PosInit};
use hulm::packing::{pack_author_with, PackOptions, PackedInstance};
use hulm::train::synthetic::{generate, SynthConfig};
use hulm::train::{
    finetune_with, predict, pretrain, score, FinetuneStyle, Objective, PretrainMode, SynthLabel, TaskKind, TaskSpec,
    TrainConfig, Trainable,
};

fn main() -> hulm::Result<()> {
    let arg = |i: usize, d: usize| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (pre_epochs, ft_epochs) = (arg(1, 12), arg(2, 6));
    let corpus = generate(&SynthConfig { n_authors: 800, docs_per_author: 24, ..SynthConfig::default() })?;
    let mut streams = corpus.streams(SynthLabel::Trait);
    let test = streams.split_off(600);
    let dev = streams.split_off(500);

    let windows = |s: &[hulm::corpus::AuthorStream]| -> hulm::Result<Vec<PackedInstance>> {
        let mut out = Vec::new();
        for x in s {
            out.extend(pack_author_with(x, 256, PackOptions { prepend_bos: true })?);
        }
        Ok(out)
    };
    let config = ModelConfig { d_model: 32, d_ff: 128, max_positions: 256, pos_init: PosInit::Sinusoidal, ..ModelConfig::default() };
    let lm = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: pre_epochs,
        trainable: Trainable::Full,
        batch_tokens: Some(216),
        ..TrainConfig::default()
    };
    let pre = pretrain(&LmParameters::<f32>::init(config)?, &windows(&streams)?, &windows(&dev)?, &lm, PretrainMode::Hulm)?;
    println!("backbone: {} steps, best epoch {}", pre.optimizer_steps, pre.best_epoch);
    let backbone = pre.checkpoint;

    let mut task = TaskSpec::from_streams(TaskKind::PersonLevel, Objective::Regression, streams, dev, test)?;
    task.max_len = 256;
    for style in [FinetuneStyle::Huft, FinetuneStyle::Tft] {
        let train_config = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: ft_epochs,
            batch_size: 8,
            trainable: Trainable::Full,
            ..TrainConfig::default()
        };
        let out = finetune_with(&backbone, &task, style, &train_config, |e| {
            println!("{style:?} epoch {} train {:.4} dev {:.4} r {:?}", e.epoch, e.train_loss, e.dev_loss, e.dev_metric)
        })?;
        let preds = predict(
            &out.checkpoint.params,
            out.checkpoint.adapter.as_ref(),
            &out.head,
            &task.test,
            task.kind,
            style.include_history(),
            task.max_len,
        )?;
        let r = score(task.objective, &TaskSpec::labels(&task.test), &preds)?;
        println!("{style:?}: test pearson r {r:.3}");
    }
    Ok(())
}
