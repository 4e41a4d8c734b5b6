pub mod metrics;
pub mod report;

pub use metrics::{auc, logloss, mean_std, position_spearman, relevance_auc, spearman};
pub use report::{
    compare_models, evaluate, mean_by_position, pctr_by_position, pctr_csv, report_from_scores, score, Comparison,
    ComparisonRow, MetricsReport, ScoreRule,
};
