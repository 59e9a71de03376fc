//! Pre-trains a small model on a synthetic author corpus in author-context
//! mode and in document-at-a-time mode, then compares held-out NLL on the
//! same tokens. Both packings start with BOS, so every document token and
//! separator is scored once in either mode. Takes a few minutes.
//!
//! `cargo run --release --example pretrain_hulm -- [epochs]`

use hulm::corpus::AuthorStream;
use hulm::eval::{evaluate_nll, NllSupport};
use hulm::model::{LmParameters, ModelConfig, PosInit};
use hulm::packing::{pack_author_with, pack_independent_with, PackOptions, PackedInstance};
use hulm::train::synthetic::{generate, SynthConfig};
use hulm::train::{pretrain_with, PretrainMode, SynthLabel, TrainConfig, Trainable};

fn main() -> hulm::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let cfg = SynthConfig { n_authors: 200, ..SynthConfig::default() };
    let corpus = generate(&cfg)?;
    let streams = corpus.streams(SynthLabel::None);
    let (train, rest) = streams.split_at(160);
    let (dev, test) = rest.split_at(20);
    let packed = |s: &[AuthorStream], mode: PretrainMode| -> hulm::Result<Vec<PackedInstance>> {
        let bos = PackOptions { prepend_bos: true };
        let mut out = Vec::new();
        for x in s {
            match mode {
                PretrainMode::Hulm => out.extend(pack_author_with(x, 128, bos)?),
                PretrainMode::Standard => out.extend(pack_independent_with(&x.documents, 200, bos)?),
            }
        }
        Ok(out)
    };
    let config = ModelConfig { d_model: 64, d_ff: 256, max_positions: 200, pos_init: PosInit::Sinusoidal, ..ModelConfig::default() };
    let base = LmParameters::<f32>::init(config)?;
    for mode in [PretrainMode::Hulm, PretrainMode::Standard] {
        let train_config = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: epochs,
            trainable: Trainable::Full,
            batch_tokens: Some(cfg.docs_per_author * (cfg.doc_len + 1) - 1),
            ..TrainConfig::default()
        };
        let out = pretrain_with(&base, &packed(train, mode)?, &packed(dev, mode)?, &train_config, mode, |e| {
            println!("{mode:?} epoch {} train {:.4} dev {:.4}", e.epoch, e.train_loss, e.dev_loss)
        })?;
        let ck = out.checkpoint;
        let nll = evaluate_nll(&ck.params, ck.adapter.as_ref(), &packed(test, mode)?, NllSupport::LossMask)?;
        println!("{mode:?}: held-out NLL {:.4} over {} tokens", nll.mean()?, nll.count);
    }
    Ok(())
}
