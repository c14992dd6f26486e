//! Metrics, cross-validated hyperparameter search, and the experiment
//! drivers that tie splitting, windowing, training, and scoring
//! together.

pub mod experiments;
pub mod folds;
pub mod grid;
pub mod metrics;

pub use experiments::{
    autoregression_csv, class_comparison_csv, classification_csv, compare_classes,
    degradation_csv, run_autoregression, run_classification, run_degradation,
    AutoregressOptions, AutoregressionReport, ClassificationReport, ClassificationScores,
    ClassifyOptions, DegradationReport, DegradeOptions, MeanStd, MlpTrainSettings,
};
pub use folds::stratified_fold_assignment;
pub use grid::{grid_search, ClassifierGrid, ConfigScore, RfGrid, SeqGrid, SeqTrainSettings};
pub use metrics::{mean_std, pr_auc, rmse, rmse_slice, roc_auc, threshold_metrics, ThresholdMetrics};
