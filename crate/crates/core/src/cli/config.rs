//! Run configuration: defaults, an INI file, then flag overrides.

use std::path::Path;

use ini::Ini;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{DEFAULT_ASCII_THRESHOLD, DEFAULT_STOPWORD_THRESHOLD};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, PosInit, DEFAULT_ALPHA, DEFAULT_RANK};
use crate::train::{
    FinetuneStyle, Objective, PretrainMode, SynthConfig, SynthLabel, TaskKind, TrainConfig, Trainable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub threads: usize,
    pub dtype: Dtype,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 42, threads: 1, dtype: Dtype::F32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One JSON Lines file holding every author.
    Stream,
    /// One file per author.
    Authors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub ascii_threshold: f64,
    pub stopword_threshold: f64,
    /// Word list for the toxicity stage; the stage is skipped without one.
    pub lexicon: Option<String>,
    pub max_toxic_hits: usize,
    pub replace_mentions: bool,
    pub layout: Layout,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            ascii_threshold: DEFAULT_ASCII_THRESHOLD,
            stopword_threshold: DEFAULT_STOPWORD_THRESHOLD,
            lexicon: None,
            max_toxic_hits: 0,
            replace_mentions: true,
            layout: Layout::Stream,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackMode {
    Author,
    Independent,
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackFormat {
    Jsonl,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackSection {
    pub mode: PackMode,
    /// Defaults to the mode's cap: 8192, 200 or 4096.
    pub max_len: Option<usize>,
    pub include_history: bool,
    pub format: PackFormat,
    /// Task packing target: `each` (one instance per document), `all`
    /// (one person-level instance per author) or a document index.
    pub target: String,
    /// Start author and independent instances with BOS.
    pub bos: bool,
}

impl Default for PackSection {
    fn default() -> Self {
        Self {
            mode: PackMode::Author,
            max_len: None,
            include_history: true,
            format: PackFormat::Jsonl,
            target: "each".into(),
            bos: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub tie_embeddings: bool,
    pub pos_init: PosInit,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_ff: m.d_ff,
            max_positions: m.max_positions,
            tie_embeddings: m.tie_embeddings,
            pos_init: m.pos_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: PretrainMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batch_tokens: Option<usize>,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub trainable: Trainable,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub quantize_block: Option<usize>,
    pub merge_adapter: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: PretrainMode::Hulm,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            batch_tokens: t.batch_tokens,
            max_epochs: t.max_epochs,
            early_stop_patience: t.early_stop_patience,
            trainable: t.trainable,
            lora_rank: DEFAULT_RANK,
            lora_alpha: DEFAULT_ALPHA,
            quantize_block: None,
            merge_adapter: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleChoice {
    Huft,
    Tft,
    Both,
}

impl StyleChoice {
    pub fn styles(self) -> Vec<FinetuneStyle> {
        match self {
            StyleChoice::Huft => vec![FinetuneStyle::Huft],
            StyleChoice::Tft => vec![FinetuneStyle::Tft],
            StyleChoice::Both => vec![FinetuneStyle::Huft, FinetuneStyle::Tft],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub name: String,
    pub kind: TaskKind,
    pub objective: ObjectiveKind,
    pub n_classes: usize,
    pub style: StyleChoice,
    pub seeds: Vec<u64>,
    pub include_history: bool,
    pub max_len: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            name: "task".into(),
            kind: TaskKind::PersonLevel,
            objective: ObjectiveKind::Regression,
            n_classes: 2,
            style: StyleChoice::Both,
            seeds: vec![42, 3, 1234],
            include_history: true,
            max_len: crate::packing::FINETUNE_MAX_LEN,
        }
    }
}

impl TaskSection {
    pub fn objective(&self) -> Objective {
        match self.objective {
            ObjectiveKind::Classification => Objective::Classification { n_classes: self.n_classes },
            ObjectiveKind::Regression => Objective::Regression,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_authors: usize,
    pub docs_per_author: usize,
    pub doc_len: usize,
    pub style_strength: f64,
    pub label: SynthLabel,
    /// Share of authors in each of the dev and test splits.
    pub holdout_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n_authors: s.n_authors,
            docs_per_author: s.docs_per_author,
            doc_len: s.doc_len,
            style_strength: s.style_strength,
            label: SynthLabel::Trait,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestChoice {
    /// Permutation test for classification metrics, paired t-test otherwise.
    Auto,
    PairedT,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub test: TestChoice,
    /// Variant every other variant of the same task is compared against.
    pub baseline: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { test: TestChoice::Auto, baseline: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub corpus: CorpusSection,
    pub pack: PackSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub task: TaskSection,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d_model: self.model.d_model,
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            d_ff: self.model.d_ff,
            max_positions: self.model.max_positions,
            seed: self.run.seed,
            tie_embeddings: self.model.tie_embeddings,
            pos_init: self.model.pos_init,
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            batch_tokens: t.batch_tokens,
            max_epochs: t.max_epochs,
            early_stop_patience: t.early_stop_patience,
            seed,
            trainable: t.trainable,
            lora_rank: t.lora_rank,
            lora_alpha: t.lora_alpha,
            quantize_block: t.quantize_block,
            merge_adapter: t.merge_adapter,
            threads: self.run.threads,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.run.seed,
            n_authors: self.synth.n_authors,
            docs_per_author: self.synth.docs_per_author,
            doc_len: self.synth.doc_len,
            style_strength: self.synth.style_strength,
            ..SynthConfig::default()
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Converts `raw` to JSON using the type of the value it replaces.
fn coerce(key: &str, current: &Value, raw: &str) -> Result<Value> {
    let raw = raw.trim();
    let bad = || Error::Config(format!("{key}: cannot parse {raw:?}"));
    Ok(match current {
        Value::Bool(_) => Value::Bool(parse_bool(raw).ok_or_else(bad)?),
        Value::Number(n) if n.is_f64() => serde_json::json!(raw.parse::<f64>().map_err(|_| bad())?),
        Value::Number(_) => serde_json::json!(raw.parse::<u64>().map_err(|_| bad())?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Array(_) => Value::Array(
            raw.split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<u64>().map(|v| serde_json::json!(v)).map_err(|_| bad()))
                .collect::<Result<_>>()?,
        ),
        Value::Null | Value::Object(_) => {
            if raw.eq_ignore_ascii_case("none") || raw.is_empty() {
                Value::Null
            } else if let Ok(v) = raw.parse::<u64>() {
                serde_json::json!(v)
            } else if let Ok(v) = raw.parse::<f64>() {
                serde_json::json!(v)
            } else {
                Value::String(raw.to_string())
            }
        }
    })
}

fn set(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let unknown = || Error::Config(format!("unknown config key {key:?}"));
    let (section, field) = key.split_once('.').ok_or_else(unknown)?;
    let slot = tree
        .get_mut(section)
        .and_then(|s| s.get_mut(field))
        .ok_or_else(unknown)?;
    *slot = coerce(key, slot, raw)?;
    Ok(())
}

/// Merges defaults, an optional INI file and `section.key` overrides, in
/// increasing precedence. Unknown keys are rejected by name.
pub fn resolve_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = file {
        let ini = Ini::load_from_file(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (section, props) in ini.iter() {
            for (k, v) in props.iter() {
                let key = match section {
                    Some(s) => format!("{s}.{k}"),
                    None => return Err(Error::Config(format!("key {k:?} outside a section"))),
                };
                set(&mut tree, &key, v)?;
            }
        }
    }
    for (k, v) in overrides {
        set(&mut tree, k, v)?;
    }
    serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))
}
