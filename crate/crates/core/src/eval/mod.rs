//! Confusion matrix, precision/recall/F1, ROC/AUC and multi-run aggregation.

mod metrics;
mod multirun;
mod report;

pub use metrics::{
    accuracy, confusion_matrix, decide, prf_per_class, roc_auc, ClassMetrics, ConfusionMatrix,
    RocCurve, RocPoint, DEFAULT_THRESHOLD,
};
pub use multirun::{aggregate, multi_run, MeanStd, MultiRunConfig, MultiRunOutcome, RunAggregate};
pub use report::{evaluate, evaluate_model, EvalReport};
