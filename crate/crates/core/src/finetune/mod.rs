//! Fine-tuning and evaluation protocol: stratified 70/10/20 splits, class
//! weights, early stopping on validation macro F1, and repeated runs
//! summarized with a Student-t confidence interval.

mod metrics;
mod report;
mod split;
mod train;

pub use metrics::{class_weights, classification_report, macro_f1, ClassScores};
pub use report::{repeat_finetune, repeat_with_ci, MetricsReport};
pub use split::{split_stratified, SplitSpec, Splits};
pub use train::{
    finetune_run, EarlyStopping, EpochLog, Example, FinetuneConfig, FinetuneOutcome, SequenceClassifier,
    StopDecision,
};
pub(crate) use train::{train_classifier, trim_batch, TeacherSignal, TrainSettings};
