//! Statistical evaluation: binary metrics, exact Clopper-Pearson
//! confidence intervals, confusion matrices, ROC/AUC, specimen-grouped
//! fold planning and the cross-validation orchestrator.

mod clopper;
mod crossval;
mod folds;
mod metrics;
mod roc;

pub use clopper::clopper_pearson;
pub use crossval::{
    cross_validate, fold_test_entries, fold_training_entries, EvalReport, FoldReport, MeanSd,
    MeanSdBlock, PooledReport, REPORT_VERSION,
};
pub use folds::{plan_folds, FoldPlan};
pub use metrics::{BinaryCounts, ConfusionMatrix};
pub use roc::{roc_and_auc, RocCurve, RocPoint};
