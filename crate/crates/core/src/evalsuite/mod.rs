//! Seen/unseen split protocol, training orchestration, the five-column
//! accuracy report, the softmax comparison classifier and error reports.

mod baseline;
mod corpus;
mod report;
mod schedule;
mod split;
mod train;

pub use baseline::{evaluate_closed, train_softmax_baseline, Classifier};
pub use corpus::{train_share, Corpus, Sample};
pub use report::{error_report, evaluate, Accuracy, ErrorCell, EvalReport, REPORT_COLUMNS};
pub use schedule::{PlateauSchedule, ScheduleAction};
pub use split::{split_charset, SplitSpec};
pub use train::{
    assemble_batch, history_csv, label_space_accuracy, seen_pairs, train, EpochRecord, TrainConfig,
    TrainOutcome,
};
