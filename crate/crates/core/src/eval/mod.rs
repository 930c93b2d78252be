//! Retrieval and generation metrics, trial sampling, frequency
//! stratification and paired significance testing.

mod generation;
mod report;
mod retrieval;
mod sampling;
mod stats;
pub mod trec;

pub use generation::{bleu, mean_words, rouge_l, RougeScore, BLEU_EPSILON};
pub use report::{render_table, GenerationMetrics, MetricReport, MetricSummary, TrialMetrics};
pub use retrieval::{
    evaluate_run, ndcg_at_k, per_query_ndcg, per_query_recall, recall_at_k, Qrels, RetrievalRun,
};
pub use sampling::{sample_trials, stratify_by_frequency, trial_rng, TrialOverlap};
pub use stats::{paired_t_test, TTestResult};
