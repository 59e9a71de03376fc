//! Command-line front end: `hulm <subcommand> --out DIR [flags]`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 runtime failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{
    resolve_config, CorpusSection, Dtype, EvalSection, Layout, ModelSection, ObjectiveKind, PackFormat, PackMode,
    PackSection, RunConfig, RunSection, StyleChoice, SynthSection, TaskSection, TestChoice, TrainSection,
};
pub use commands::{PredictionFile, Splits};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hulm", version, about = "Author-context language modeling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// INI file with [section] key = value entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving every output of the run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Generic override, e.g. `--set train.max_epochs=3`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct SplitArgs {
    /// JSON manifest {"train": [...], "dev": [...], "test": [...]} of labeled corpus files.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    train: Vec<PathBuf>,
    #[arg(long)]
    dev: Vec<PathBuf>,
    #[arg(long)]
    test: Vec<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    task_name: Option<String>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct OptimArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    trainable: Option<String>,
    #[arg(long)]
    dtype: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest a JSON Lines corpus and run the cleaning pipeline.
    BuildCorpus {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long)]
        lexicon: Option<String>,
        #[arg(long)]
        ascii_threshold: Option<f64>,
        #[arg(long)]
        stopword_threshold: Option<f64>,
        /// Keep @-mentions (task data).
        #[arg(long)]
        keep_mentions: bool,
        #[arg(long)]
        layout: Option<String>,
    },
    /// Tokenize author streams into packed instances.
    Pack {
        #[command(flatten)]
        shared: Shared,
        /// Stream file written by build-corpus or synth.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        include_history: Option<String>,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        target: Option<usize>,
        /// Prepend BOS to author and independent instances.
        #[arg(long)]
        bos: bool,
    },
    /// Next-token training on packed instances.
    Pretrain {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// Starting checkpoint; a fresh model is initialized without one.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        merge_adapter: bool,
        #[arg(long)]
        quantize_block: Option<usize>,
        #[arg(long)]
        batch_tokens: Option<usize>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Task fine-tuning, sweeping styles and seeds.
    Finetune {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        style: Option<String>,
        /// Comma-separated seeds, e.g. 42,3,1234.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        quantize_block: Option<usize>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Linear probe on a frozen backbone.
    Probe {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        include_history: Option<String>,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Score prediction files, compare variants, or compute perplexity.
    Evaluate {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        test: Option<String>,
        /// Checkpoint and packed instances for perplexity.
        #[arg(long, requires = "packed")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        packed: Option<PathBuf>,
    },
    /// Write a synthetic labeled author corpus with train/dev/test splits.
    Synth {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        n_authors: Option<usize>,
        #[arg(long)]
        docs_per_author: Option<usize>,
        #[arg(long)]
        doc_len: Option<usize>,
        #[arg(long)]
        style_strength: Option<f64>,
        #[arg(long)]
        label: Option<String>,
    },
}

struct Overrides(Vec<(String, String)>);

impl Overrides {
    fn put<T: ToString>(&mut self, key: &str, v: &Option<T>) {
        if let Some(v) = v {
            self.0.push((key.to_string(), v.to_string()));
        }
    }

    fn shared(&mut self, s: &Shared) -> Result<(), Error> {
        self.put("run.seed", &s.seed);
        self.put("run.threads", &s.threads);
        for kv in &s.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects SECTION.KEY=VALUE, got {kv:?}")))?;
            self.0.push((k.trim().to_string(), v.to_string()));
        }
        Ok(())
    }

    fn optim(&mut self, o: &OptimArgs) {
        self.put("train.learning_rate", &o.lr);
        self.put("train.max_epochs", &o.epochs);
        self.put("train.early_stop_patience", &o.patience);
        self.put("train.batch_size", &o.batch_size);
        self.put("train.trainable", &o.trainable);
        self.put("run.dtype", &o.dtype);
    }

    fn split(&mut self, s: &SplitArgs) {
        self.put("task.kind", &s.kind);
        self.put("task.objective", &s.objective);
        self.put("task.n_classes", &s.n_classes);
        self.put("task.name", &s.task_name);
        self.put("task.max_len", &s.max_len);
    }
}

fn splits(s: &SplitArgs) -> Result<Splits, Error> {
    match &s.splits {
        Some(path) => Splits::load(path),
        None => Ok(Splits {
            train: s.train.clone(),
            dev: s.dev.clone(),
            test: s.test.clone(),
        }),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Stream(_) => EXIT_RUNTIME,
        _ => EXIT_DATA,
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    let mut o = Overrides(Vec::new());
    let (shared, action): (Shared, Box<dyn FnOnce(&RunConfig, &std::path::Path) -> Result<(), Error>>) =
        match command {
            Command::BuildCorpus { shared, input, lexicon, ascii_threshold, stopword_threshold, keep_mentions, layout } => {
                o.put("corpus.lexicon", &lexicon);
                o.put("corpus.ascii_threshold", &ascii_threshold);
                o.put("corpus.stopword_threshold", &stopword_threshold);
                o.put("corpus.layout", &layout);
                if keep_mentions {
                    o.put("corpus.replace_mentions", &Some(false));
                }
                (shared, Box::new(move |c, out| commands::build_corpus(c, &input, out)))
            }
            Command::Pack { shared, input, mode, max_len, include_history, format, target, bos } => {
                o.put("pack.mode", &mode);
                o.put("pack.max_len", &max_len);
                o.put("pack.include_history", &include_history);
                o.put("pack.format", &format);
                o.put("pack.target", &target);
                if bos {
                    o.put("pack.bos", &Some(true));
                }
                (shared, Box::new(move |c, out| commands::pack(c, &input, out)))
            }
            Command::Pretrain { shared, train, dev, init, mode, merge_adapter, quantize_block, batch_tokens, optim } => {
                o.put("train.mode", &mode);
                o.put("train.quantize_block", &quantize_block);
                o.put("train.batch_tokens", &batch_tokens);
                if merge_adapter {
                    o.put("train.merge_adapter", &Some(true));
                }
                o.optim(&optim);
                (shared, Box::new(move |c, out| commands::pretrain(c, &train, &dev, init.as_deref(), out)))
            }
            Command::Finetune { shared, checkpoint, split, style, seeds, quantize_block, optim } => {
                o.split(&split);
                o.put("task.style", &style);
                o.put("task.seeds", &seeds);
                o.put("train.quantize_block", &quantize_block);
                o.optim(&optim);
                let sp = splits(&split)?;
                (shared, Box::new(move |c, out| commands::finetune(c, &checkpoint, &sp, out)))
            }
            Command::Probe { shared, checkpoint, split, include_history, optim } => {
                o.split(&split);
                o.put("task.include_history", &include_history);
                o.optim(&optim);
                let sp = splits(&split)?;
                (shared, Box::new(move |c, out| commands::probe(c, &checkpoint, &sp, out)))
            }
            Command::Evaluate { shared, predictions, baseline, test, checkpoint, packed } => {
                o.put("eval.baseline", &baseline);
                o.put("eval.test", &test);
                let lm = checkpoint.zip(packed);
                (shared, Box::new(move |c, out| commands::evaluate(c, &predictions, lm, out)))
            }
            Command::Synth { shared, n_authors, docs_per_author, doc_len, style_strength, label } => {
                o.put("synth.n_authors", &n_authors);
                o.put("synth.docs_per_author", &docs_per_author);
                o.put("synth.doc_len", &doc_len);
                o.put("synth.style_strength", &style_strength);
                o.put("synth.label", &label);
                (shared, Box::new(move |c, out| commands::synth(c, out)))
            }
        };
    o.shared(&shared)?;
    let config = resolve_config(shared.config.as_deref(), &o.0)?;
    std::fs::create_dir_all(&shared.out).map_err(|e| Error::io(&shared.out, e))?;
    commands::write_json(&shared.out.join("config.json"), &config)?;
    action(&config, &shared.out)
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
