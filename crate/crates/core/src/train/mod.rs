//! Pre-training, task fine-tuning, linear probing and synthetic corpora.

mod batch;
mod config;
mod finetune;
mod optim;
mod pretrain;
mod task;
pub mod synthetic;

pub use config::{write_run_log, EarlyStopping, EpochLog, TrainConfig, Trainable};
pub use optim::Adam;
pub use pretrain::{pretrain, pretrain_with, PretrainMode, PretrainOutcome};
pub use synthetic::{generate_synthetic_author_corpus, SynthConfig, SynthLabel, SyntheticCorpus};
pub use finetune::{
    finetune, finetune_with, linear_probe, predict, score, task_items, FinetuneOutcome, FinetuneStyle, ProbeOutcome,
    TaskItem,
};
pub use task::{aggregate_person, Objective, TaskExample, TaskHead, TaskKind, TaskSpec};
