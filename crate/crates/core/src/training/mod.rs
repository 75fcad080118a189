//! Alternating adversarial training, the plateau learning-rate schedule, bucket
//! pretraining and identity augmentation.

mod augment;
mod pretrain;
mod run;
mod schedule;
mod trainer;

pub use augment::augment_identity;
pub use pretrain::{buckets_frozen, install_buckets, partition_by_bucket, pretrain_buckets};
pub use run::{
    read_history, run_training, write_history, HistoryRow, TrainData, TrainOutcome,
    CHECKPOINT_FILE, HISTORY_FILE,
};
pub use schedule::PlateauSchedule;
pub use trainer::{StepMetrics, TrainConfig, Trainer};
