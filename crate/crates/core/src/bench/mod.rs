//! Evaluation harness: datasets, scoring, sampling, multi-seed runs,
//! format analytics, and reports.

mod analytics;
mod dataset;
mod metrics;
mod qtype;
mod report;
mod run;

use thiserror::Error;

pub use analytics::{analytics_tokens, format_analytics, is_structural, text_analytics, FormatAnalytics};
pub use dataset::{load_dataset, parse_item, stratified_sample, DatasetItem};
pub use metrics::{accuracy_sd, bleu, exact_match, normalize_answer, rouge_l, rouge_l_multi, BLEU_VARIANT};
pub use qtype::{classify_question, default_rules, QuestionClassifier, QuestionRule, DEFAULT_QTYPE};
pub use report::{render_markdown, write_reports};
pub use run::{
    average_breakdowns, average_summaries, breakdown, run_eval, size_bin_label, summarize, table_tokens,
    BackendFactory, Breakdown, EvalConfig, EvalOutput, EvalReport, MetricSummary, ReportHeader, RunRecord,
    SeedReport, DEFAULT_SIZE_BINS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("dataset `{dataset}` has {have} items, {need} requested")]
    InsufficientItems { dataset: String, have: usize, need: usize },
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("report i/o: {0}")]
    Io(String),
}
