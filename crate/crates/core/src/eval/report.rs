use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{paired_t_test, permutation_test, DEFAULT_PERMUTATIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    WeightedF1,
    PearsonR,
    Perplexity,
}

impl MetricName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::WeightedF1 => "weighted_f1",
            MetricName::PearsonR => "pearson_r",
            MetricName::Perplexity => "perplexity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    PairedT,
    Permutation,
}

/// Score of one model variant on one task, with the per-item scores used for tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub variant: String,
    pub metric: MetricName,
    pub value: f64,
    pub per_item: Vec<f64>,
}

/// A declared `variant` vs. `baseline` comparison on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub task: String,
    pub variant: String,
    pub baseline: String,
    pub test: TestName,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub delta: f64,
    pub p_value: f64,
    pub test: TestName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: String,
    pub variant: String,
    pub metric: MetricName,
    pub value: f64,
    pub n: usize,
    pub comparisons: Vec<Comparison>,
}

/// One row per (variant, task); comparisons attach to the variant's row.
pub fn build_report(results: &[TaskResult], comparisons: &[ComparisonSpec]) -> Result<Vec<MetricReport>> {
    let find = |task: &str, variant: &str| {
        results
            .iter()
            .find(|r| r.task == task && r.variant == variant)
            .ok_or_else(|| Error::Invalid(format!("no result for variant {variant:?} on task {task:?}")))
    };
    let mut rows: Vec<MetricReport> = results
        .iter()
        .map(|r| MetricReport {
            task: r.task.clone(),
            variant: r.variant.clone(),
            metric: r.metric,
            value: r.value,
            n: r.per_item.len(),
            comparisons: Vec::new(),
        })
        .collect();
    for c in comparisons {
        let v = find(&c.task, &c.variant)?;
        let b = find(&c.task, &c.baseline)?;
        let p_value = match c.test {
            TestName::PairedT => paired_t_test(&v.per_item, &b.per_item)?,
            TestName::Permutation => permutation_test(&v.per_item, &b.per_item, DEFAULT_PERMUTATIONS, c.seed)?,
        };
        let row = rows
            .iter_mut()
            .find(|r| r.task == c.task && r.variant == c.variant)
            .expect("row exists for every result");
        row.comparisons.push(Comparison {
            baseline: c.baseline.clone(),
            delta: v.value - b.value,
            p_value,
            test: c.test,
        });
    }
    Ok(rows)
}

pub fn report_to_json(report: &[MetricReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn report_from_json(s: &str) -> Result<Vec<MetricReport>> {
    Ok(serde_json::from_str(s)?)
}

/// Variants as rows, tasks as columns; `*` marks p < 0.05 against any declared baseline.
pub fn render_table(report: &[MetricReport]) -> String {
    let mut tasks: Vec<&str> = Vec::new();
    let mut variants: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), String> = BTreeMap::new();
    for r in report {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
        let marker = if r.comparisons.iter().any(|c| c.p_value < 0.05) { "*" } else { "" };
        cells.insert((&r.variant, &r.task), format!("{:.3}{marker}", r.value));
    }
    let mut header = vec!["variant".to_string()];
    header.extend(tasks.iter().map(|t| t.to_string()));
    let mut rows = vec![header];
    for v in &variants {
        let mut row = vec![v.to_string()];
        for t in &tasks {
            row.push(cells.get(&(*v, *t)).cloned().unwrap_or_else(|| "-".into()));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}
