use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Dtype, Layout, PackFormat, PackMode, RunConfig, TestChoice};
use crate::corpus::{
    corpus_stats, group_by_author, ingest, normalize_text, read_stream_file, run_pipeline, write_author_files,
    write_stream_file, AuthorStream, Lexicon, PipelineConfig, RawDocument,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_report, correctness, evaluate_nll, paired_t_test, render_table, report_to_json, ComparisonSpec, MetricName,
    NllSupport, TaskResult, TestName,
};
use crate::model::{lora_merge, Checkpoint, LmParameters, Scalar};
use crate::packing::{
    pack_author_with, pack_for_task, pack_independent_with, read_binary, read_jsonl, write_binary, write_jsonl, PackOptions, PackedInstance,
    TaskTarget, FINETUNE_MAX_LEN, PRETRAIN_AUTHOR_MAX_LEN, PRETRAIN_INDEPENDENT_MAX_LEN,
};
use crate::train::synthetic::generate;
use crate::train::{
    finetune as run_finetune, linear_probe, predict, pretrain as run_pretrain, score, write_run_log, FinetuneStyle,
    Objective, TaskSpec,
};

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Train/dev/test file lists. Relative paths in a manifest resolve against its directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<PathBuf>,
    pub dev: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
}

impl Splits {
    pub fn load(path: &Path) -> Result<Self> {
        let mut s: Splits = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in s.train.iter_mut().chain(s.dev.iter_mut()).chain(s.test.iter_mut()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(s)
    }
}

/// Per-example test predictions of one trained variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub task: String,
    pub variant: String,
    pub metric: MetricName,
    pub predictions: Vec<f64>,
    pub labels: Vec<f64>,
}

impl PredictionFile {
    fn objective_metric(objective: Objective) -> MetricName {
        match objective {
            Objective::Classification { .. } => MetricName::WeightedF1,
            Objective::Regression => MetricName::PearsonR,
        }
    }

    /// Metric value and per-item scores: 0/1 correctness for classification,
    /// negative absolute error for regression.
    pub fn evaluate(&self) -> Result<TaskResult> {
        if self.predictions.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                left: self.predictions.len(),
                right: self.labels.len(),
            });
        }
        let (value, per_item) = match self.metric {
            MetricName::WeightedF1 => {
                let t: Vec<i64> = self.labels.iter().map(|&v| v as i64).collect();
                let p: Vec<i64> = self.predictions.iter().map(|&v| v as i64).collect();
                (crate::eval::weighted_f1(&t, &p)?, correctness(&t, &p)?)
            }
            MetricName::PearsonR => (
                score(Objective::Regression, &self.labels, &self.predictions)?,
                self.predictions.iter().zip(&self.labels).map(|(p, l)| -(p - l).abs()).collect(),
            ),
            MetricName::Perplexity => {
                return Err(Error::Invalid("prediction files carry task metrics, not perplexity".into()))
            }
        };
        Ok(TaskResult {
            task: self.task.clone(),
            variant: self.variant.clone(),
            metric: self.metric,
            value,
            per_item,
        })
    }
}

fn write_raw_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for d in docs {
        let mut rec = serde_json::json!({ "user_id": d.author_id, "text": d.text });
        if let Some(t) = d.created_at {
            rec["created_at"] = t.into();
        }
        if let Some(s) = &d.source {
            rec["source"] = s.clone().into();
        }
        if let Some(l) = &d.label {
            rec["label"] = serde_json::to_value(l)?;
        }
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Labeled task files: ingested and normalized, without the corpus filters.
fn read_task_streams(paths: &[PathBuf]) -> Result<Vec<AuthorStream>> {
    let mut docs = Vec::new();
    for p in paths {
        let report = ingest(p)?;
        if report.rejected() > 0 {
            eprintln!("{}: skipped {} malformed lines", p.display(), report.rejected());
        }
        docs.extend(report.documents.into_iter().map(normalize_text));
    }
    Ok(group_by_author(docs))
}

fn read_packed(path: &Path) -> Result<Vec<PackedInstance>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_binary(path),
        _ => read_jsonl(path),
    }
}

pub(crate) fn synth(c: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate(&c.synth_config())?;
    let n = corpus.authors.len();
    let hold = (n as f64 * c.synth.holdout_fraction).round() as usize;
    if hold == 0 || 2 * hold >= n {
        return Err(Error::Config(format!(
            "holdout_fraction {} leaves no usable split for {n} authors",
            c.synth.holdout_fraction
        )));
    }
    let parts = [("train", 0..n - 2 * hold), ("dev", n - 2 * hold..n - hold), ("test", n - hold..n)];
    let label = c.synth.label;
    let mut manifest = Splits::default();
    for (name, range) in parts {
        let authors = &corpus.authors[range];
        let docs: Vec<RawDocument> = authors.iter().flat_map(|a| a.raw_documents(label)).collect();
        let file = format!("{name}.jsonl");
        write_raw_jsonl(&out.join(&file), &docs)?;
        let streams: Vec<AuthorStream> = authors.iter().map(|a| a.stream(label)).collect();
        write_stream_file(out.join(format!("{name}.streams.jsonl")), &streams)?;
        let list = match name {
            "train" => &mut manifest.train,
            "dev" => &mut manifest.dev,
            _ => &mut manifest.test,
        };
        list.push(PathBuf::from(file));
    }
    write_json(&out.join("splits.json"), &manifest)?;
    let truth: Vec<_> = corpus
        .authors
        .iter()
        .map(|a| {
            serde_json::json!({
                "author_id": a.author_id,
                "cluster": a.cluster,
                "trait": a.trait_value,
                "favorites": String::from_utf8_lossy(&a.favorites),
            })
        })
        .collect();
    write_json(&out.join("authors.json"), &truth)
}

pub(crate) fn build_corpus(c: &RunConfig, inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Config("build-corpus needs at least one --input".into()));
    }
    let mut docs = Vec::new();
    let mut rejected = serde_json::Map::new();
    for p in inputs {
        let report = ingest(p)?;
        rejected.insert(p.display().to_string(), serde_json::json!(report.rejected_lines));
        docs.extend(report.documents);
    }
    let lexicon = c.corpus.lexicon.as_ref().map(Lexicon::from_file).transpose()?;
    let pipeline = PipelineConfig {
        ascii_threshold: c.corpus.ascii_threshold,
        stopword_threshold: c.corpus.stopword_threshold,
        lexicon,
        max_toxic_hits: c.corpus.max_toxic_hits,
        replace_mentions: c.corpus.replace_mentions,
    };
    let (streams, report) = run_pipeline(docs, &pipeline)?;
    match c.corpus.layout {
        Layout::Stream => write_stream_file(out.join("streams.jsonl"), &streams)?,
        Layout::Authors => write_author_files(out.join("authors"), &streams)?,
    }
    write_json(&out.join("stats.json"), &corpus_stats(&streams))?;
    write_json(
        &out.join("report.json"),
        &serde_json::json!({ "pipeline": report, "rejected_lines": rejected }),
    )
}

pub(crate) fn pack(c: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let streams = read_stream_file(input)?;
    let p = &c.pack;
    let opts = PackOptions { prepend_bos: p.bos };
    let mut instances = Vec::new();
    match p.mode {
        PackMode::Author => {
            let max_len = p.max_len.unwrap_or(PRETRAIN_AUTHOR_MAX_LEN);
            for s in &streams {
                instances.extend(pack_author_with(s, max_len, opts)?);
            }
        }
        PackMode::Independent => {
            let max_len = p.max_len.unwrap_or(PRETRAIN_INDEPENDENT_MAX_LEN);
            for s in &streams {
                instances.extend(pack_independent_with(&s.documents, max_len, opts)?);
            }
        }
        PackMode::Task => {
            let max_len = p.max_len.unwrap_or(FINETUNE_MAX_LEN);
            for s in &streams {
                match p.target.as_str() {
                    "all" => instances.push(pack_for_task(s, TaskTarget::All, max_len, p.include_history)?),
                    "each" => {
                        for t in 0..s.documents.len() {
                            instances.push(pack_for_task(s, TaskTarget::Index(t), max_len, p.include_history)?);
                        }
                    }
                    other => {
                        let t: usize = other.parse().map_err(|_| {
                            Error::Config(format!("pack.target must be each, all or an index, got {other:?}"))
                        })?;
                        instances.push(pack_for_task(s, TaskTarget::Index(t), max_len, p.include_history)?);
                    }
                }
            }
        }
    }
    match p.format {
        PackFormat::Jsonl => write_jsonl(out.join("packed.jsonl"), &instances)?,
        PackFormat::Binary => write_binary(out.join("packed.bin"), &instances)?,
    }
    let tokens: usize = instances.iter().map(|i| i.len()).sum();
    write_json(
        &out.join("pack.json"),
        &serde_json::json!({ "authors": streams.len(), "instances": instances.len(), "tokens": tokens }),
    )
}

fn load_base<S: Scalar>(path: &Path) -> Result<LmParameters<S>> {
    let ck = Checkpoint::<S>::load(path)?;
    match &ck.adapter {
        Some(a) => lora_merge(&ck.params, a),
        None => Ok(ck.params),
    }
}

fn pretrain_typed<S: Scalar>(c: &RunConfig, train: &Path, dev: &Path, init: Option<&Path>, out: &Path) -> Result<()> {
    let train = read_packed(train)?;
    let dev = read_packed(dev)?;
    let base = match init {
        Some(p) => load_base::<S>(p)?,
        None => LmParameters::<S>::init(c.model_config())?,
    };
    let outcome = run_pretrain(&base, &train, &dev, &c.train_config(c.run.seed), c.train.mode)?;
    outcome.checkpoint.save(out.join("checkpoint.hulm"))?;
    write_run_log(out.join("run_log.jsonl"), &outcome.log)?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "mode": c.train.mode,
            "initial_dev_loss": outcome.initial_dev_loss,
            "best_epoch": outcome.best_epoch,
            "best_dev_loss": outcome.log.iter().map(|e| e.dev_loss).fold(f64::INFINITY, f64::min),
            "optimizer_steps": outcome.optimizer_steps,
        }),
    )
}

pub(crate) fn pretrain(c: &RunConfig, train: &Path, dev: &Path, init: Option<&Path>, out: &Path) -> Result<()> {
    match c.run.dtype {
        Dtype::F32 => pretrain_typed::<f32>(c, train, dev, init, out),
        Dtype::F64 => pretrain_typed::<f64>(c, train, dev, init, out),
    }
}

fn load_task(c: &RunConfig, splits: &Splits) -> Result<TaskSpec> {
    if splits.train.is_empty() || splits.dev.is_empty() {
        return Err(Error::Config("task runs need train and dev files (--splits or --train/--dev)".into()));
    }
    let mut spec = TaskSpec::from_streams(
        c.task.kind,
        c.task.objective(),
        read_task_streams(&splits.train)?,
        read_task_streams(&splits.dev)?,
        read_task_streams(&splits.test)?,
    )?;
    spec.max_len = c.task.max_len;
    Ok(spec)
}

/// Test predictions when a test split exists, dev predictions otherwise.
fn eval_examples(spec: &TaskSpec) -> &[crate::train::TaskExample] {
    if spec.test.is_empty() {
        &spec.dev
    } else {
        &spec.test
    }
}

fn finetune_typed<S: Scalar>(c: &RunConfig, checkpoint: &Path, splits: &Splits, out: &Path) -> Result<()> {
    let ck = Checkpoint::<S>::load(checkpoint)?;
    let spec = load_task(c, splits)?;
    let examples = eval_examples(&spec);
    let labels = TaskSpec::labels(examples);
    let metric = PredictionFile::objective_metric(spec.objective);
    let mut results = Vec::new();
    let mut summary = serde_json::Map::new();
    for style in c.task.style.styles() {
        let name = match style {
            FinetuneStyle::Huft => "huft",
            FinetuneStyle::Tft => "tft",
        };
        let mut scores = Vec::new();
        for &seed in &c.task.seeds {
            let dir = out.join(format!("{name}_seed{seed}"));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let outcome = run_finetune(&ck, &spec, style, &c.train_config(seed))?;
            outcome.checkpoint.save(dir.join("checkpoint.hulm"))?;
            outcome.head.save(dir.join("head.hulm"))?;
            write_run_log(dir.join("run_log.jsonl"), &outcome.log)?;
            let predictions = predict(
                &outcome.checkpoint.params,
                outcome.checkpoint.adapter.as_ref(),
                &outcome.head,
                examples,
                spec.kind,
                style.include_history(),
                spec.max_len,
            )?;
            let file = PredictionFile {
                task: c.task.name.clone(),
                variant: format!("{name}_seed{seed}"),
                metric,
                predictions,
                labels: labels.clone(),
            };
            write_json(&dir.join("predictions.json"), &file)?;
            scores.push(file.evaluate()?.value);
        }
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        summary.insert(name.into(), serde_json::json!({ "seeds": c.task.seeds, "scores": scores, "mean": mean }));
        results.push(TaskResult {
            task: c.task.name.clone(),
            variant: name.into(),
            metric,
            value: mean,
            per_item: scores,
        });
    }
    // Seeds are the paired items when both styles ran.
    let mut comparisons = Vec::new();
    if results.len() == 2 && c.task.seeds.len() >= 2 {
        let p = paired_t_test(&results[0].per_item, &results[1].per_item)?;
        summary.insert(
            "huft_minus_tft".into(),
            serde_json::json!({ "delta": results[0].value - results[1].value, "p_value": p, "test": TestName::PairedT }),
        );
        comparisons.push(ComparisonSpec {
            task: c.task.name.clone(),
            variant: "huft".into(),
            baseline: "tft".into(),
            test: TestName::PairedT,
            seed: c.run.seed,
        });
    }
    write_json(&out.join("summary.json"), &summary)?;
    let report = build_report(&results, &comparisons)?;
    fs::write(out.join("report.json"), report_to_json(&report)?).map_err(|e| Error::io(out, e))?;
    let table = render_table(&report);
    fs::write(out.join("report.txt"), &table).map_err(|e| Error::io(out, e))?;
    print!("{table}");
    Ok(())
}

pub(crate) fn finetune(c: &RunConfig, checkpoint: &Path, splits: &Splits, out: &Path) -> Result<()> {
    match c.run.dtype {
        Dtype::F32 => finetune_typed::<f32>(c, checkpoint, splits, out),
        Dtype::F64 => finetune_typed::<f64>(c, checkpoint, splits, out),
    }
}

fn probe_typed<S: Scalar>(c: &RunConfig, checkpoint: &Path, splits: &Splits, out: &Path) -> Result<()> {
    let ck = Checkpoint::<S>::load(checkpoint)?;
    let spec = load_task(c, splits)?;
    let include_history = c.task.include_history;
    let outcome = linear_probe(&ck, &spec, include_history, &c.train_config(c.run.seed))?;
    outcome.head.save(out.join("head.hulm"))?;
    write_run_log(out.join("run_log.jsonl"), &outcome.log)?;
    let examples = eval_examples(&spec);
    let predictions = predict(
        &ck.params,
        ck.adapter.as_ref(),
        &outcome.head,
        examples,
        spec.kind,
        include_history,
        spec.max_len,
    )?;
    let file = PredictionFile {
        task: c.task.name.clone(),
        variant: format!("probe_{}", if include_history { "history" } else { "document" }),
        metric: PredictionFile::objective_metric(spec.objective),
        predictions,
        labels: TaskSpec::labels(examples),
    };
    let value = file.evaluate()?.value;
    write_json(&out.join("predictions.json"), &file)?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "metric": file.metric, "value": value, "best_epoch": outcome.best_epoch }),
    )
}

pub(crate) fn probe(c: &RunConfig, checkpoint: &Path, splits: &Splits, out: &Path) -> Result<()> {
    match c.run.dtype {
        Dtype::F32 => probe_typed::<f32>(c, checkpoint, splits, out),
        Dtype::F64 => probe_typed::<f64>(c, checkpoint, splits, out),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub(crate) fn evaluate(
    c: &RunConfig,
    predictions: &[PathBuf],
    lm: Option<(PathBuf, PathBuf)>,
    out: &Path,
) -> Result<()> {
    if predictions.is_empty() && lm.is_none() {
        return Err(Error::Config("evaluate needs --predictions or --checkpoint with --packed".into()));
    }
    let mut results = Vec::new();
    for p in predictions {
        let file: PredictionFile = read_json(p)?;
        results.push(file.evaluate()?);
    }
    if let Some((ck_path, packed)) = lm {
        let ck = Checkpoint::<f64>::load(&ck_path)?;
        let instances = read_packed(&packed)?;
        let mut per_item = Vec::with_capacity(instances.len());
        let mut total = crate::model::NllSum::default();
        for inst in &instances {
            let nll = evaluate_nll(&ck.params, ck.adapter.as_ref(), std::slice::from_ref(inst), NllSupport::LossMask)?;
            if let Ok(m) = nll.mean() {
                per_item.push(m);
            }
            total += nll;
        }
        results.push(TaskResult {
            task: stem(&packed),
            variant: stem(&ck_path),
            metric: MetricName::Perplexity,
            value: total.mean()?.exp(),
            per_item,
        });
    }
    let mut comparisons = Vec::new();
    if let Some(baseline) = &c.eval.baseline {
        for r in &results {
            if &r.variant == baseline || !results.iter().any(|b| &b.variant == baseline && b.task == r.task) {
                continue;
            }
            let test = match (c.eval.test, r.metric) {
                (TestChoice::PairedT, _) => TestName::PairedT,
                (TestChoice::Permutation, _) => TestName::Permutation,
                (TestChoice::Auto, MetricName::WeightedF1) => TestName::Permutation,
                (TestChoice::Auto, _) => TestName::PairedT,
            };
            comparisons.push(ComparisonSpec {
                task: r.task.clone(),
                variant: r.variant.clone(),
                baseline: baseline.clone(),
                test,
                seed: c.run.seed,
            });
        }
    }
    let report = build_report(&results, &comparisons)?;
    fs::write(out.join("report.json"), report_to_json(&report)?).map_err(|e| Error::io(out, e))?;
    let table = render_table(&report);
    fs::write(out.join("report.txt"), &table).map_err(|e| Error::io(out, e))?;
    print!("{table}");
    Ok(())
}
