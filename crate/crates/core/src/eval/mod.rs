//! Metrics, significance tests and result tables.

mod metrics;
mod perplexity;
mod report;
mod significance;

pub use metrics::{correctness, pearson_r, weighted_f1};
pub use perplexity::{evaluate_nll, perplexity, within_document_mask, NllSupport};
pub use report::{
    build_report, render_table, report_from_json, report_to_json, Comparison, ComparisonSpec, MetricName,
    MetricReport, TaskResult, TestName,
};
pub use significance::{
    incomplete_beta, ln_gamma, paired_t_test, permutation_test, student_t_two_sided, DEFAULT_PERMUTATIONS,
};
