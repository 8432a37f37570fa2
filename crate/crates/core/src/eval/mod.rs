//! Dataset ingestion, stratified sampling and scoring.

mod breakdown;
mod dataset;
mod metrics;
mod table;

pub use breakdown::{dominant_signal, error_breakdown, BucketEntry, ErrorBreakdown, ErrorBucket};
pub use dataset::{
    load_dataset, load_dataset_with, stratified_sample, DatasetRecord, FractionError, IngestError, LabelMapping,
};
pub use metrics::{
    align, brier, ece, per_category_breakdown, score, score_with_bins, CategoryScore, Confusion, EvalError,
    MetricReport, Scored, DEFAULT_ECE_BINS, UNCERTAIN_PROBABILITY,
};
pub use table::{render_category_table, render_confusion, render_errors, render_summary_table};
