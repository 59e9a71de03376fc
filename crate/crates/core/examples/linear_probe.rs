//! Trains a linear head on frozen pooled states, with and without history.

use hulm::model::{Checkpoint, LmParameters, ModelConfig, Tensors};
use hulm::train::synthetic::{generate, SynthConfig};
use hulm::train::{linear_probe, predict, score, Objective, SynthLabel, TaskKind, TaskSpec, TrainConfig};

fn main() -> hulm::Result<()> {
    let corpus = generate(&SynthConfig { n_authors: 60, docs_per_author: 8, ..SynthConfig::default() })?;
    let mut streams = corpus.streams(SynthLabel::Document);
    let test = streams.split_off(50);
    let dev = streams.split_off(40);
    let task = TaskSpec::from_streams(TaskKind::DocumentLevel, Objective::Classification { n_classes: 2 }, streams, dev, test)?;

    let config = ModelConfig { d_model: 32, d_ff: 64, n_layers: 1, max_positions: 256, ..ModelConfig::default() };
    let backbone = Checkpoint::new(LmParameters::<f64>::init(config)?);
    let before = backbone.params.fingerprint();
    for include_history in [true, false] {
        let cfg = TrainConfig { learning_rate: 1e-2, max_epochs: 10, batch_size: 8, ..TrainConfig::default() };
        let probe = linear_probe(&backbone, &task, include_history, &cfg)?;
        let preds = predict(&backbone.params, None, &probe.head, &task.test, task.kind, include_history, task.max_len)?;
        let f1 = score(task.objective, &TaskSpec::labels(&task.test), &preds)?;
        println!("history {include_history}: best epoch {}, test weighted F1 {f1:.3}", probe.best_epoch);
    }
    assert_eq!(before, backbone.params.fingerprint());
    println!("backbone unchanged");
    Ok(())
}
