//! Targets, loss, augmentation, optimizer, schedule, checkpoints and the
//! training loop.

mod augment;
mod checkpoint;
mod config;
mod loss;
mod optim;
mod schedule;
mod targets;
mod trainer;

pub use augment::{apply_augment, augment, augment_matrix, AugmentConfig, AugmentDraw, TrainSample};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{OneCycle, TrainConfig};
pub use loss::keypoint_loss;
pub use optim::{adamw_step, AdamW, OptimizerState};
pub use schedule::{one_cycle_lr, warmup_end};
pub use targets::{assign_targets, nearest_point, TargetAssignment};
pub use trainer::{
    metrics_csv, prepare_samples, sample_gradients, train, train_with_progress, EpochMetrics, TrainOutcome, Trainer,
};
