use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::AuthorStream;
use crate::error::{Error, Result};
use crate::model::{read_container, write_container, Scalar, Tensors, INIT_STD};
use crate::packing::FINETUNE_MAX_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DocumentLevel,
    PersonLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Objective {
    Classification { n_classes: usize },
    Regression,
}

impl Objective {
    pub fn n_outputs(&self) -> usize {
        match self {
            Objective::Classification { n_classes } => *n_classes,
            Objective::Regression => 1,
        }
    }

    fn check_label(&self, label: f64) -> Result<()> {
        match *self {
            Objective::Classification { n_classes } => {
                if label.fract() != 0.0 || label < 0.0 || label >= n_classes as f64 {
                    return Err(Error::LabelMismatch(format!(
                        "classification label {label} is not an integer in [0, {n_classes})"
                    )));
                }
            }
            Objective::Regression => {
                if !label.is_finite() {
                    return Err(Error::LabelMismatch(format!("regression label {label} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// One labeled unit: a document of an author (document level) or an author.
#[derive(Debug, Clone)]
pub struct TaskExample {
    pub stream: Arc<AuthorStream>,
    /// Target document index for document-level tasks.
    pub target: Option<usize>,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub objective: Objective,
    pub train: Vec<TaskExample>,
    pub dev: Vec<TaskExample>,
    pub test: Vec<TaskExample>,
    /// Token cap per instance; clipped to the model's `max_positions`.
    pub max_len: usize,
}

fn examples_from(kind: TaskKind, objective: Objective, streams: Vec<AuthorStream>) -> Result<Vec<TaskExample>> {
    let mut out = Vec::new();
    for stream in streams {
        let stream = Arc::new(stream);
        match kind {
            TaskKind::DocumentLevel => {
                for (i, doc) in stream.documents.iter().enumerate() {
                    if let Some(label) = doc.label.as_ref() {
                        let label = label
                            .as_f64()
                            .ok_or_else(|| Error::LabelMismatch(format!("{}: non-numeric label", stream.author_id)))?;
                        objective.check_label(label)?;
                        out.push(TaskExample {
                            stream: Arc::clone(&stream),
                            target: Some(i),
                            label,
                        });
                    }
                }
            }
            TaskKind::PersonLevel => {
                let mut label: Option<f64> = None;
                for doc in &stream.documents {
                    if let Some(l) = doc.label.as_ref() {
                        let l = l
                            .as_f64()
                            .ok_or_else(|| Error::LabelMismatch(format!("{}: non-numeric label", stream.author_id)))?;
                        match label {
                            Some(prev) if prev != l => {
                                return Err(Error::LabelMismatch(format!(
                                    "author {} carries conflicting labels {prev} and {l}",
                                    stream.author_id
                                )))
                            }
                            _ => label = Some(l),
                        }
                    }
                }
                let label = label
                    .ok_or_else(|| Error::LabelMismatch(format!("author {} has no label", stream.author_id)))?;
                objective.check_label(label)?;
                out.push(TaskExample {
                    stream,
                    target: None,
                    label,
                });
            }
        }
    }
    Ok(out)
}

impl TaskSpec {
    /// Builds examples from labeled streams. Document-level tasks take every
    /// labeled document as a target; person-level tasks require each author's
    /// labeled documents to agree.
    pub fn from_streams(
        kind: TaskKind,
        objective: Objective,
        train: Vec<AuthorStream>,
        dev: Vec<AuthorStream>,
        test: Vec<AuthorStream>,
    ) -> Result<Self> {
        if let Objective::Classification { n_classes } = objective {
            if n_classes < 2 {
                return Err(Error::Invalid("classification needs at least two classes".into()));
            }
        }
        let spec = Self {
            kind,
            objective,
            train: examples_from(kind, objective, train)?,
            dev: examples_from(kind, objective, dev)?,
            test: examples_from(kind, objective, test)?,
            max_len: FINETUNE_MAX_LEN,
        };
        if spec.train.is_empty() {
            return Err(Error::Empty("task training examples"));
        }
        if spec.dev.is_empty() {
            return Err(Error::Empty("task dev examples"));
        }
        Ok(spec)
    }

    pub fn labels(examples: &[TaskExample]) -> Vec<f64> {
        examples.iter().map(|e| e.label).collect()
    }
}

/// Linear map from pooled states to class logits or a standardized regression value.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead<S> {
    pub objective: Objective,
    pub weight: Array2<S>,
    pub bias: Array1<S>,
    /// Train-split label mean and standard deviation (regression only).
    pub label_mean: f64,
    pub label_std: f64,
}

impl<S: Scalar> TaskHead<S> {
    pub fn new(objective: Objective, d_model: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        Self {
            objective,
            weight: Array2::from_shape_simple_fn((objective.n_outputs(), d_model), || S::of(normal.sample(&mut rng))),
            bias: Array1::zeros(objective.n_outputs()),
            label_mean: 0.0,
            label_std: 1.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            objective: self.objective,
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
            label_mean: self.label_mean,
            label_std: self.label_std,
        }
    }

    pub fn forward(&self, pooled: &Array1<S>) -> Array1<S> {
        self.weight.dot(pooled) + &self.bias
    }

    /// Class id (argmax, lowest id on ties) or de-standardized regression value.
    pub fn decode(&self, out: &Array1<S>) -> f64 {
        match self.objective {
            Objective::Classification { .. } => {
                let mut best = 0;
                for (i, v) in out.iter().enumerate() {
                    if *v > out[best] {
                        best = i;
                    }
                }
                best as f64
            }
            Objective::Regression => out[0].f64() * self.label_std + self.label_mean,
        }
    }

    /// Loss of one output against a raw label, and its gradient w.r.t. the output.
    pub fn loss(&self, out: &Array1<S>, label: f64) -> (f64, Array1<S>) {
        match self.objective {
            Objective::Classification { .. } => {
                let y = label as usize;
                let max = out.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
                let lse = max + out.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
                let mut d = out.mapv(|v| (v - lse).exp());
                d[y] -= S::one();
                ((lse - out[y]).f64(), d)
            }
            Objective::Regression => {
                let z = (label - self.label_mean) / self.label_std;
                let e = out[0].f64() - z;
                (e * e, Array1::from_elem(1, S::of(2.0 * e)))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut header = Map::new();
        header.insert("kind".into(), "head".into());
        header.insert("objective".into(), serde_json::to_value(self.objective)?);
        header.insert("label_mean".into(), self.label_mean.into());
        header.insert("label_std".into(), self.label_std.into());
        write_container(path, header, &[self as &dyn Tensors<S>])
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let raw = read_container(path)?;
        if raw.header.get("kind").and_then(Value::as_str) != Some("head") {
            return Err(Error::Checkpoint("not a task-head file".into()));
        }
        let objective: Objective = serde_json::from_value(
            raw.header
                .get("objective")
                .cloned()
                .ok_or_else(|| Error::Checkpoint("head lacks objective".into()))?,
        )?;
        let rec = raw
            .records
            .iter()
            .find(|r| r.name == "head.weight")
            .ok_or_else(|| Error::Checkpoint("missing tensor head.weight".into()))?;
        let d_model = *rec.shape.get(1).ok_or_else(|| Error::Checkpoint("bad head shape".into()))?;
        let mut head = Self::new(objective, d_model, 0);
        raw.fill(&mut head)?;
        let num = |k: &str| raw.header.get(k).and_then(Value::as_f64);
        head.label_mean = num("label_mean").unwrap_or(0.0);
        head.label_std = num("label_std").unwrap_or(1.0);
        Ok(head)
    }
}

impl<S: Scalar> Tensors<S> for TaskHead<S> {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, S>)> {
        vec![
            ("head.weight".into(), self.weight.view().into_dyn()),
            ("head.bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, S>)> {
        vec![
            ("head.weight".into(), self.weight.view_mut().into_dyn()),
            ("head.bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}

/// Person-level prediction from per-document predictions: the mode (lowest
/// label on ties) for classification, the mean for regression.
pub fn aggregate_person(predictions: &[f64], objective: Objective) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("per-document predictions"));
    }
    match objective {
        Objective::Regression => Ok(predictions.iter().sum::<f64>() / predictions.len() as f64),
        Objective::Classification { .. } => {
            let mut counts: std::collections::BTreeMap<i64, usize> = Default::default();
            for &p in predictions {
                *counts.entry(p as i64).or_default() += 1;
            }
            let max = *counts.values().max().expect("non-empty");
            let label = counts
                .iter()
                .find(|(_, &c)| c == max)
                .map(|(&l, _)| l)
                .expect("non-empty");
            Ok(label as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLS: Objective = Objective::Classification { n_classes: 3 };

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate_person(&[1.0, 1.0, 2.0], CLS).unwrap(), 1.0);
        assert_eq!(aggregate_person(&[20.0, 30.0], Objective::Regression).unwrap(), 25.0);
        assert_eq!(aggregate_person(&[2.0, 1.0], CLS).unwrap(), 1.0);
        assert!(aggregate_person(&[], CLS).is_err());
    }

    #[test]
    fn label_validation() {
        assert!(CLS.check_label(2.0).is_ok());
        assert!(CLS.check_label(3.0).is_err());
        assert!(CLS.check_label(0.5).is_err());
        assert!(Objective::Regression.check_label(f64::NAN).is_err());
    }

    #[test]
    fn head_round_trips_through_container() {
        let dir = tempfile::tempdir().unwrap();
        let mut head = TaskHead::<f64>::new(Objective::Regression, 5, 3);
        head.label_mean = 0.25;
        head.label_std = 2.0;
        let path = dir.path().join("head.bin");
        head.save(&path).unwrap();
        assert_eq!(TaskHead::<f64>::load(&path).unwrap(), head);
    }

    #[test]
    fn untrained_head_on_uniform_labels_is_near_log_classes() {
        let head = TaskHead::<f64>::new(Objective::Classification { n_classes: 4 }, 16, 1);
        let pooled = Array1::from_elem(16, 0.5);
        let out = head.forward(&pooled);
        let mean: f64 = (0..4).map(|y| head.loss(&out, y as f64).0).sum::<f64>() / 4.0;
        assert!((mean - 4f64.ln()).abs() < 0.05);
    }
}
