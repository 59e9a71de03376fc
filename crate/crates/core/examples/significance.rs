//! Metrics, significance tests and a results table for two variants.

use hulm::eval::{
    build_report, correctness, paired_t_test, pearson_r, permutation_test, render_table, weighted_f1, ComparisonSpec,
    MetricName, TaskResult, TestName,
};

fn main() -> hulm::Result<()> {
    let truth = [0i64, 1, 2, 1, 0, 2, 2, 1, 0, 1];
    let ours = [0i64, 1, 2, 1, 0, 2, 1, 1, 0, 1];
    let base = [0i64, 2, 2, 0, 0, 1, 1, 1, 0, 0];
    println!("weighted F1: ours {:.3}, baseline {:.3}", weighted_f1(&truth, &ours)?, weighted_f1(&truth, &base)?);
    let (a, b) = (correctness(&truth, &ours)?, correctness(&truth, &base)?);
    println!("permutation p = {:.4}", permutation_test(&a, &b, 10_000, 1)?);

    let ages = [23.0, 35.0, 41.0, 19.0, 52.0, 30.0];
    let pred_a = [25.0, 33.0, 45.0, 22.0, 49.0, 31.0];
    let pred_b = [30.0, 31.0, 36.0, 28.0, 40.0, 33.0];
    println!("pearson r: {:.3} vs {:.3}", pearson_r(&pred_a, &ages)?, pearson_r(&pred_b, &ages)?);
    println!("paired t p over three seeds = {:.4}", paired_t_test(&[0.61, 0.58, 0.63], &[0.49, 0.50, 0.47])?);

    let results = vec![
        TaskResult { task: "stance".into(), variant: "huft".into(), metric: MetricName::WeightedF1, value: weighted_f1(&truth, &ours)?, per_item: a },
        TaskResult { task: "stance".into(), variant: "tft".into(), metric: MetricName::WeightedF1, value: weighted_f1(&truth, &base)?, per_item: b },
    ];
    let spec = ComparisonSpec { task: "stance".into(), variant: "huft".into(), baseline: "tft".into(), test: TestName::Permutation, seed: 0 };
    print!("{}", render_table(&build_report(&results, &[spec])?));
    Ok(())
}
